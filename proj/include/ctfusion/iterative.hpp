// Penalized-likelihood comparison reconstructor: Poisson negative
// log-likelihood of the measured counts plus a Huber penalty on central
// differences, minimized by gradient descent with a backtracking line search.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ctfusion/core.hpp"
#include "ctfusion/fbp.hpp"
#include "ctfusion/noise.hpp"
#include "ctfusion/parallel.hpp"
#include "ctfusion/radon.hpp"

namespace ctfusion {

/// Huber penalty value and derivative: quadratic inside |x| < delta, linear
/// outside; C1 at the junction; derivative clamped to +-delta.
inline std::pair<double, double> huber(double x, double delta) {
    if (!(delta > 0.0)) throw range_error("huber: delta must be positive");
    const double a = std::fabs(x);
    if (a < delta) return {0.5 * x * x, x};
    return {delta * a - 0.5 * delta * delta, x > 0.0 ? delta : -delta};
}

enum class PLInit { zero, fbp };

struct PLConfig {
    double beta = 0.0;   // penalty weight
    double delta = 1.0;  // Huber threshold
    int max_iters = 200;
    double grad_tol = 1e-8;  // stop when the gradient norm falls below
    PLInit init = PLInit::fbp;
    double init_p = 2.0, init_q = 0.5;  // projection filter of the FBP start
    double armijo_c1 = 1e-4;
    int max_backtracks = 40;
    double step_growth = 1.5;  // accepted-step expansion for the next iterate

    void validate() const {
        if (beta < 0.0) throw config_error("PLConfig: beta must be nonnegative");
        if (!(delta > 0.0)) throw config_error("PLConfig: delta must be positive");
        if (max_iters < 0) throw config_error("PLConfig: negative iteration budget");
    }
};

namespace detail {

// Central differences with edge-clamped indices, so differences across the
// border of a constant image vanish. No 1/2 factor.
inline void central_differences(const Image& f, Image& dx, Image& dy) {
    const int n = f.size;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int xr = std::min(x + 1, n - 1), xl = std::max(x - 1, 0);
            const int yd = std::min(y + 1, n - 1), yu = std::max(y - 1, 0);
            dx.at(y, x) = f.at(y, xr) - f.at(y, xl);
            dy.at(y, x) = f.at(yd, x) - f.at(yu, x);
        }
}

// Transpose of central_differences applied to per-pixel weights.
inline void central_differences_adjoint(const Image& ux, const Image& uy, Image& out) {
    const int n = out.size;
    std::fill(out.v.begin(), out.v.end(), 0.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int xr = std::min(x + 1, n - 1), xl = std::max(x - 1, 0);
            const int yd = std::min(y + 1, n - 1), yu = std::max(y - 1, 0);
            out.at(y, xr) += ux.at(y, x);
            out.at(y, xl) -= ux.at(y, x);
            out.at(yd, x) += uy.at(y, x);
            out.at(yu, x) -= uy.at(y, x);
        }
}

}  // namespace detail

/// Roughness component: sum of Huber penalties over both central-difference
/// fields. Useful on its own to compare smoothness across runs.
inline double pl_roughness(const Image& f, double delta) {
    Image dx(f.size), dy(f.size);
    detail::central_differences(f, dx, dy);
    double acc = 0.0;
    for (size_t p = 0; p < dx.v.size(); ++p)
        acc += huber(dx.v[p], delta).first + huber(dy.v[p], delta).first;
    return acc;
}

/// Negative Poisson log-likelihood (constant log y! terms dropped) plus the
/// weighted Huber roughness. Counts y and the forward model share the
/// protocol's intensity/scale.
inline double pl_objective(const Image& f, const Sinogram& y, const ScanProtocol& protocol,
                           double beta, double delta, const RadonOperator& op) {
    const Sinogram lambda = expected_counts(op.project(f), protocol);
    if (!y.geom.same_grid(lambda.geom)) throw shape_error("pl_objective: counts grid mismatch");
    double like = 0.0;
    for (size_t i = 0; i < lambda.v.size(); ++i)
        like += lambda.v[i] - y.v[i] * std::log(lambda.v[i]);
    return like + beta * pl_roughness(f, delta);
}

/// Exact gradient of pl_objective: scale * R*(y - lambda) for the likelihood
/// part plus beta * D^T psi'(D f) for the penalty.
inline Image pl_gradient(const Image& f, const Sinogram& y, const ScanProtocol& protocol,
                         double beta, double delta, const RadonOperator& op) {
    Sinogram lambda = expected_counts(op.project(f), protocol);
    if (!y.geom.same_grid(lambda.geom)) throw shape_error("pl_gradient: counts grid mismatch");
    Sinogram resid = lambda;
    for (size_t i = 0; i < resid.v.size(); ++i)
        resid.v[i] = protocol.scale * (y.v[i] - lambda.v[i]);
    Image grad = op.backproject(resid);

    if (beta > 0.0) {
        Image dx(f.size), dy(f.size), pen(f.size);
        detail::central_differences(f, dx, dy);
        for (size_t p = 0; p < dx.v.size(); ++p) {
            dx.v[p] = huber(dx.v[p], delta).second;
            dy.v[p] = huber(dy.v[p], delta).second;
        }
        detail::central_differences_adjoint(dx, dy, pen);
        for (size_t p = 0; p < grad.v.size(); ++p) grad.v[p] += beta * pen.v[p];
    }
    return grad;
}

struct PLResult {
    Image image;
    std::vector<double> trace;  // objective after the start and each iterate
    int iterations = 0;
    double grad_norm = 0.0;
};

/// Gradient descent with Armijo backtracking on the penalized likelihood.
/// The trace is monotone non-increasing; iteration stops at the budget, at
/// the gradient-norm threshold, or when no acceptable step remains.
inline PLResult pl_reconstruct(const Sinogram& y, const PLConfig& cfg,
                               const ScanProtocol& protocol, const RadonOperator& op) {
    cfg.validate();
    const ScanGeometry& geom = op.geometry();
    if (!y.geom.same_grid(geom)) throw shape_error("pl_reconstruct: counts grid mismatch");

    PLResult result;
    result.image = Image(geom.image_size);
    if (cfg.init == PLInit::fbp) {
        const Sinogram g_ml = counts_to_sinogram(y, protocol);
        result.image = fbp_reconstruct(
            g_ml, butterworth_apodize(ramlak_filter(geom), cfg.init_p, cfg.init_q), op);
    }

    double obj = pl_objective(result.image, y, protocol, cfg.beta, cfg.delta, op);
    if (!std::isfinite(obj)) throw training_error("pl_reconstruct: non-finite start");
    result.trace.push_back(obj);

    double step = 1.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Image grad = pl_gradient(result.image, y, protocol, cfg.beta, cfg.delta, op);
        double gnorm2 = 0.0;
        for (double g : grad.v) gnorm2 += g * g;
        result.grad_norm = std::sqrt(gnorm2);
        if (result.grad_norm <= cfg.grad_tol) break;

        bool accepted = false;
        for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
            Image trial = result.image;
            for (size_t p = 0; p < trial.v.size(); ++p) trial.v[p] -= step * grad.v[p];
            const double trial_obj =
                pl_objective(trial, y, protocol, cfg.beta, cfg.delta, op);
            if (std::isfinite(trial_obj) && trial_obj <= obj - cfg.armijo_c1 * step * gnorm2) {
                result.image = std::move(trial);
                obj = trial_obj;
                result.trace.push_back(obj);
                ++result.iterations;
                step *= cfg.step_growth;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no acceptable step at this scale
    }
    return result;
}

/// Writes an objective trace as a two-column CSV (iteration, objective).
inline std::string trace_to_csv(const std::vector<double>& trace) {
    std::string out = "iteration,objective\n";
    char buf[64];
    for (size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
        out += buf;
    }
    return out;
}

}  // namespace ctfusion
