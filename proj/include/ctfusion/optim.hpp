// Shared numerical optimizers: limited-memory quasi-Newton with a strong-Wolfe
// cubic line search, CG on the normal equations for linear least squares, and
// golden-section refinement for 1-D minimization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "ctfusion/core.hpp"

namespace ctfusion {

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Minimizer of the cubic through (a, fa, ga) and (b, fb, gb); falls back to
/// bisection when the interpolant is degenerate or leaves the bracket.
inline double cubic_minimizer(double a, double fa, double ga, double b, double fb, double gb) {
    const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - ga * gb;
    if (disc < 0.0) return 0.5 * (a + b);
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    double t = b - (b - a) * ((gb + d2 - d1) / (gb - ga + 2.0 * d2));
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (!std::isfinite(t) || t <= lo || t >= hi) t = 0.5 * (a + b);
    // Keep a safe distance from the bracket ends so progress is guaranteed.
    const double margin = 0.1 * (hi - lo);
    return std::clamp(t, lo + margin, hi - margin);
}

}  // namespace detail

struct QuasiNewtonConfig {
    int max_iters = 500;
    double grad_tol = 1e-6;      // stop when the gradient max-norm falls below
    int history = 8;             // L-BFGS memory
    double wolfe_c1 = 1e-4;      // sufficient decrease
    double wolfe_c2 = 0.9;       // curvature condition
    int max_line_iters = 25;
};

struct QuasiNewtonResult {
    std::vector<double> x;
    double fx = 0.0;
    std::vector<double> trace;  // objective after each accepted iterate
    int iterations = 0;
    bool converged = false;
};

/// Minimizes obj(x, grad) by L-BFGS with a strong-Wolfe line search using
/// cubic interpolation. The recorded trace is strictly the accepted objective
/// values, so it is non-increasing by the sufficient-decrease condition.
template <class Objective>
QuasiNewtonResult quasi_newton_minimize(Objective&& obj, std::vector<double> x,
                                        const QuasiNewtonConfig& cfg = {}) {
    const size_t n = x.size();
    std::vector<double> grad(n), x_new(n), grad_new(n), dir(n);
    double fx = obj(x, grad);
    if (!std::isfinite(fx)) throw training_error("quasi_newton: non-finite initial objective");

    QuasiNewtonResult res;
    res.trace.push_back(fx);

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    auto grad_max = [&](const std::vector<double>& g) {
        double m = 0.0;
        for (double v : g) m = std::max(m, std::fabs(v));
        return m;
    };

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        if (grad_max(grad) < cfg.grad_tol) {
            res.converged = true;
            break;
        }

        // Two-loop recursion for the search direction -H * grad.
        dir = grad;
        std::vector<double> alpha_mem(s_hist.size());
        for (size_t i = s_hist.size(); i-- > 0;) {
            alpha_mem[i] = rho_hist[i] * detail::dot(s_hist[i], dir);
            detail::axpy(-alpha_mem[i], y_hist[i], dir);
        }
        if (!s_hist.empty()) {
            const auto& s = s_hist.back();
            const auto& yv = y_hist.back();
            const double gamma = detail::dot(s, yv) / detail::dot(yv, yv);
            for (double& v : dir) v *= gamma;
        }
        for (size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * detail::dot(y_hist[i], dir);
            detail::axpy(alpha_mem[i] - beta, s_hist[i], dir);
        }
        for (double& v : dir) v = -v;

        double g0 = detail::dot(grad, dir);
        if (g0 >= 0.0) {  // not a descent direction; reset to steepest descent
            for (size_t i = 0; i < n; ++i) dir[i] = -grad[i];
            g0 = detail::dot(grad, dir);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            if (g0 >= 0.0) break;  // zero gradient
        }

        // Strong-Wolfe line search (bracket + cubic zoom).
        auto phi = [&](double t, std::vector<double>& g_out) {
            for (size_t i = 0; i < n; ++i) x_new[i] = x[i] + t * dir[i];
            return obj(x_new, g_out);
        };

        double t = iter == 0 ? std::min(1.0, 1.0 / std::max(1e-12, grad_max(grad))) : 1.0;
        double t_prev = 0.0, f_prev = fx, g_prev = g0;
        double t_lo = 0.0, f_lo = fx, g_lo = g0, t_hi = 0.0, f_hi = 0.0, g_hi = 0.0;
        bool bracketed = false, accepted = false;
        double ft = fx, gt = g0;

        for (int ls = 0; ls < cfg.max_line_iters; ++ls) {
            ft = phi(t, grad_new);
            if (!std::isfinite(ft)) {  // step too long into bad territory
                t = 0.5 * (t_prev + t);
                continue;
            }
            gt = detail::dot(grad_new, dir);
            if (ft > fx + cfg.wolfe_c1 * t * g0 || (ls > 0 && ft >= f_prev)) {
                t_lo = t_prev; f_lo = f_prev; g_lo = g_prev;
                t_hi = t; f_hi = ft; g_hi = gt;
                bracketed = true;
                break;
            }
            if (std::fabs(gt) <= -cfg.wolfe_c2 * g0) {
                accepted = true;
                break;
            }
            if (gt >= 0.0) {
                t_lo = t; f_lo = ft; g_lo = gt;
                t_hi = t_prev; f_hi = f_prev; g_hi = g_prev;
                bracketed = true;
                break;
            }
            t_prev = t; f_prev = ft; g_prev = gt;
            t *= 2.0;
        }

        if (bracketed && !accepted) {
            for (int z = 0; z < cfg.max_line_iters; ++z) {
                t = detail::cubic_minimizer(t_lo, f_lo, g_lo, t_hi, f_hi, g_hi);
                ft = phi(t, grad_new);
                gt = std::isfinite(ft) ? detail::dot(grad_new, dir) : 0.0;
                if (!std::isfinite(ft) || ft > fx + cfg.wolfe_c1 * t * g0 || ft >= f_lo) {
                    t_hi = t; f_hi = ft; g_hi = gt;
                } else {
                    if (std::fabs(gt) <= -cfg.wolfe_c2 * g0) {
                        accepted = true;
                        break;
                    }
                    if (gt * (t_hi - t_lo) >= 0.0) {
                        t_hi = t_lo; f_hi = f_lo; g_hi = g_lo;
                    }
                    t_lo = t; f_lo = ft; g_lo = gt;
                }
                if (std::fabs(t_hi - t_lo) < 1e-14) break;
            }
        }

        if (!accepted && !(std::isfinite(ft) && ft < fx)) break;  // no usable progress

        // Accept the step.
        std::vector<double> s(n), yv(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            yv[i] = grad_new[i] - grad[i];
        }
        x.swap(x_new);
        grad.swap(grad_new);
        fx = ft;
        res.trace.push_back(fx);
        res.iterations = iter + 1;

        const double sy = detail::dot(s, yv);
        if (sy > 1e-12 * detail::norm2(s) * detail::norm2(yv)) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (int(s_hist.size()) > cfg.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
    }

    if (!std::isfinite(fx)) throw training_error("quasi_newton: objective diverged", res.trace);
    res.x = std::move(x);
    res.fx = fx;
    return res;
}

struct CgnrResult {
    std::vector<double> x;
    std::vector<double> residual_norm_trace;  // ||Ax - b|| after each iteration
    int iterations = 0;
};

/// CG on the normal equations for min_x ||Ax - b||^2 with matrix-free A.
/// apply(x, out) computes Ax into out (data space); apply_adjoint(r, out)
/// computes A^T r into out (unknown space). The residual norm trace is
/// non-increasing (CGNR minimizes the residual over a growing Krylov space).
template <class ApplyFn, class AdjointFn>
CgnrResult cgnr_solve(ApplyFn&& apply, AdjointFn&& apply_adjoint, const std::vector<double>& b,
                      std::vector<double> x, int max_iters, double rel_tol = 1e-12) {
    const size_t n = x.size();
    std::vector<double> r(b.size()), q(b.size()), s(n), p(n);

    apply(x, r);
    for (size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    apply_adjoint(r, s);
    p = s;
    double s_norm2 = detail::dot(s, s);

    CgnrResult res;
    res.residual_norm_trace.push_back(detail::norm2(r));
    const double stop = rel_tol * res.residual_norm_trace.front();

    for (int it = 0; it < max_iters; ++it) {
        if (!(s_norm2 > 0.0)) break;
        apply(p, q);
        const double q_norm2 = detail::dot(q, q);
        if (!(q_norm2 > 0.0)) break;
        const double alpha = s_norm2 / q_norm2;
        detail::axpy(alpha, p, x);
        detail::axpy(-alpha, q, r);
        apply_adjoint(r, s);
        const double s_norm2_new = detail::dot(s, s);
        if (!std::isfinite(s_norm2_new))
            throw training_error("cgnr: diverged", res.residual_norm_trace);
        const double beta = s_norm2_new / s_norm2;
        for (size_t i = 0; i < n; ++i) p[i] = s[i] + beta * p[i];
        s_norm2 = s_norm2_new;
        res.iterations = it + 1;
        res.residual_norm_trace.push_back(detail::norm2(r));
        if (res.residual_norm_trace.back() <= stop) break;
    }
    res.x = std::move(x);
    return res;
}

/// Golden-section search for the minimizer of a unimodal fn on [lo, hi].
inline double golden_section_minimize(const std::function<double(double)>& fn, double lo,
                                      double hi, double tol = 1e-3) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = fn(c), fd = fn(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - phi * (b - a);
            fc = fn(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + phi * (b - a);
            fd = fn(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace ctfusion
