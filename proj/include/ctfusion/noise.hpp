// Photon-count simulation: expected counts I0*exp(-scale*g), Poisson sampling
// driven by the deterministic Rng, and the ML conversion back to a sinogram.
#pragma once

#include <algorithm>
#include <cmath>

#include "ctfusion/core.hpp"
#include "ctfusion/parallel.hpp"

namespace ctfusion {

/// Scan setup: source intensity, minimal expected count target and the
/// sinogram scaling that realizes it on the calibration data.
struct ScanProtocol {
    double source_intensity = 0.0;  // I0, photons per detector
    double min_count_target = 60.0;
    double scale = 1.0;  // multiplier applied to g before exponentiation

    ScanProtocol() = default;
    ScanProtocol(double i0, double y_min, double s)
        : source_intensity(i0), min_count_target(y_min), scale(s) {
        if (!(i0 > 0.0) || !(y_min > 0.0) || y_min > i0)
            throw config_error("ScanProtocol: need 0 < y_min <= I0");
        if (!(scale > 0.0)) throw config_error("ScanProtocol: scale must be positive");
    }
};

/// scale = ln(I0/y_min) / max_g, so the dimmest calibration bin sees exactly
/// y_min expected photons.
inline ScanProtocol calibrate_scale(double max_g, double i0, double y_min = 60.0) {
    if (!(i0 > 0.0) || !(y_min > 0.0) || y_min > i0)
        throw config_error("calibrate_scale: need 0 < y_min <= I0");
    if (!(max_g > 0.0)) throw degenerate_error("calibrate_scale: calibration sinogram is zero");
    return ScanProtocol(i0, y_min, std::log(i0 / y_min) / max_g);
}

inline ScanProtocol calibrate_scale(const Sinogram& g, double i0, double y_min = 60.0) {
    double mx = 0.0;
    for (double x : g.v) {
        if (x < 0.0) throw degenerate_error("calibrate_scale: negative sinogram entry");
        mx = std::max(mx, x);
    }
    return calibrate_scale(mx, i0, y_min);
}

/// Corpus-wide calibration; train and test must share one protocol.
inline ScanProtocol calibrate_scale(const std::vector<Sinogram>& corpus, double i0,
                                    double y_min = 60.0) {
    double mx = 0.0;
    for (const auto& g : corpus)
        for (double x : g.v) mx = std::max(mx, x);
    return calibrate_scale(mx, i0, y_min);
}

/// Expected photon counts y0 = I0 * exp(-scale * g), stored in sinogram shape.
inline Sinogram expected_counts(const Sinogram& g, const ScanProtocol& p) {
    Sinogram y(g.geom);
    for (size_t i = 0; i < g.v.size(); ++i)
        y.v[i] = p.source_intensity * std::exp(-p.scale * g.v[i]);
    return y;
}

namespace detail {

inline int poisson_inversion(double lambda, Rng& rng) {
    // Sequential search; adequate for lambda < ~30.
    double u = rng.next_double();
    double p = std::exp(-lambda);
    double cum = p;
    int k = 0;
    while (u > cum && k < 1000) {
        ++k;
        p *= lambda / k;
        cum += p;
    }
    return k;
}

inline int poisson_ptrs(double lambda, Rng& rng) {
    // Hormann's transformed rejection with squeeze (PTRS), valid for
    // lambda >= 10; used here from 30 up.
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        double u = rng.next_double() - 0.5;
        double v = rng.next_double();
        double us = 0.5 - std::fabs(u);
        double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= v_r) return int(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            kf * loglam - lambda - std::lgamma(kf + 1.0))
            return int(kf);
    }
}

}  // namespace detail

/// One Poisson draw; deterministic given the rng state.
inline int poisson_sample(double lambda, Rng& rng) {
    lambda = std::max(lambda, 1e-12);
    return lambda < 30.0 ? detail::poisson_inversion(lambda, rng)
                         : detail::poisson_ptrs(lambda, rng);
}

/// Independent Poisson(y0) draw per bin. Streams are keyed by bin index, so
/// the result does not depend on the thread count.
inline Sinogram sample_counts(const Sinogram& y0, const Rng& rng) {
    Sinogram y(y0.geom);
    par::parallel_for(int64_t(y0.v.size()), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            Rng bin_rng = rng.stream(uint64_t(i));
            y.v[size_t(i)] = poisson_sample(y0.v[size_t(i)], bin_rng);
        }
    });
    return y;
}

/// ML sinogram estimate g_n = -ln(y/I0)/scale; zero counts are clipped to 1.
inline Sinogram counts_to_sinogram(const Sinogram& y, const ScanProtocol& p) {
    Sinogram g(y.geom);
    for (size_t i = 0; i < y.v.size(); ++i) {
        double c = std::max(y.v[i], 1.0);
        g.v[i] = -std::log(c / p.source_intensity) / p.scale;
    }
    return g;
}

/// Full scan simulation: expected counts, Poisson draw, ML estimate.
inline Sinogram simulate_noisy_sinogram(const Sinogram& g, const ScanProtocol& p, const Rng& rng) {
    return counts_to_sinogram(sample_counts(expected_counts(g, p), rng), p);
}

}  // namespace ctfusion
