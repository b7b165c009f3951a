// Locally adaptive confidence-interval fusion: Monte-Carlo variance maps,
// stochastic-error bounds, the interval switch rule, its grid-search
// calibration, and a 1-D window-mean reference denoiser exercising the same
// interval logic.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "ctfusion/core.hpp"
#include "ctfusion/noise.hpp"
#include "ctfusion/parallel.hpp"
#include "ctfusion/radon.hpp"

namespace ctfusion {

/// A reconstruction operator together with a human-readable identity used for
/// artifact bookkeeping and model/bank compatibility checks.
struct Reconstructor {
    std::string tag;
    std::function<Image(const Sinogram&)> apply;
};

/// Pixelwise noise variance of each estimator, from J simulated instances.
struct VarianceMaps {
    std::vector<Image> maps;  // one per estimator, ordered like the estimators
    int instances = 0;        // J
};

/// Calibration constants of the bound rho_i(p) = kappa * sqrt(lambda_i(p))^q.
struct ConfidenceParams {
    double kappa_cal = 2.0;
    double q_exp = 1.0;
};

/// Chosen estimator index per pixel, 1-based like the estimator sequence.
struct SwitchMap {
    Image indices;
};

/// Unbiased sample variance per pixel of each estimator's reconstruction over
/// J independent noisy scans of f.
inline VarianceMaps estimate_variance_maps(const Image& f, const std::vector<Reconstructor>& est,
                                           const ScanGeometry& geom, const ScanProtocol& protocol,
                                           int instances, const Rng& rng,
                                           const std::function<Sinogram(const Sinogram&)>&
                                               sinogram_prep = {}) {
    if (instances < 2) throw config_error("estimate_variance_maps: need at least 2 instances");
    if (est.empty()) throw config_error("estimate_variance_maps: empty estimator list");

    RadonOperator op(geom);
    const Sinogram clean = op.project(f);

    const size_t n_pix = size_t(geom.image_size) * geom.image_size;
    std::vector<Image> mean(est.size(), Image(geom.image_size));
    std::vector<Image> m2(est.size(), Image(geom.image_size));

    for (int j = 0; j < instances; ++j) {
        Sinogram noisy = simulate_noisy_sinogram(clean, protocol, rng.stream(uint64_t(j)));
        if (sinogram_prep) noisy = sinogram_prep(noisy);
        for (size_t e = 0; e < est.size(); ++e) {
            Image rec = est[e].apply(noisy);
            // Welford update keeps the variance numerically stable.
            for (size_t i = 0; i < n_pix; ++i) {
                const double delta = rec.v[i] - mean[e].v[i];
                mean[e].v[i] += delta / (j + 1);
                m2[e].v[i] += delta * (rec.v[i] - mean[e].v[i]);
            }
        }
    }

    VarianceMaps out;
    out.instances = instances;
    out.maps.resize(est.size(), Image(geom.image_size));
    for (size_t e = 0; e < est.size(); ++e)
        for (size_t i = 0; i < n_pix; ++i) out.maps[e].v[i] = m2[e].v[i] / (instances - 1);
    return out;
}

/// Pixelwise average of per-phantom variance maps (train-corpus pooling).
inline VarianceMaps average_variance_maps(const std::vector<VarianceMaps>& per_phantom) {
    if (per_phantom.empty()) throw config_error("average_variance_maps: empty input");
    VarianceMaps out = per_phantom.front();
    for (size_t k = 1; k < per_phantom.size(); ++k) {
        if (per_phantom[k].maps.size() != out.maps.size())
            throw shape_error("average_variance_maps: estimator counts differ");
        for (size_t e = 0; e < out.maps.size(); ++e)
            for (size_t i = 0; i < out.maps[e].v.size(); ++i)
                out.maps[e].v[i] += per_phantom[k].maps[e].v[i];
    }
    for (auto& m : out.maps)
        for (double& v : m.v) v /= double(per_phantom.size());
    return out;
}

/// rho_i(p) = kappa * (sqrt(lambda_i(p)))^q, elementwise.
inline std::vector<Image> stochastic_bounds(const VarianceMaps& maps,
                                            const ConfidenceParams& params) {
    if (!(params.kappa_cal > 0.0) || !(params.q_exp > 0.0))
        throw config_error("stochastic_bounds: kappa and q must be positive");
    std::vector<Image> bounds;
    bounds.reserve(maps.maps.size());
    for (const Image& lambda : maps.maps) {
        Image rho(lambda.size);
        for (size_t i = 0; i < lambda.v.size(); ++i)
            rho.v[i] = params.kappa_cal * std::pow(std::sqrt(std::max(0.0, lambda.v[i])),
                                                   params.q_exp);
        bounds.push_back(std::move(rho));
    }
    return bounds;
}

/// Per pixel, D_i = [f_i - 2 rho_i, f_i + 2 rho_i]; the chosen index i+ is the
/// longest prefix whose intervals still share a point, tracked with a running
/// [lo, hi] intersection; the output copies the chosen estimate.
inline std::pair<Image, SwitchMap> legone_fuse(const std::vector<Image>& estimates,
                                               const std::vector<Image>& bounds) {
    if (estimates.empty()) throw config_error("legone_fuse: empty estimate list");
    if (bounds.size() != estimates.size())
        throw shape_error("legone_fuse: estimate/bound count mismatch");
    const int size = estimates.front().size;
    for (size_t i = 0; i < estimates.size(); ++i)
        if (estimates[i].size != size || bounds[i].size != size)
            throw shape_error("legone_fuse: image size mismatch");

    Image fused(size);
    SwitchMap sw{Image(size)};
    const int64_t n_pix = int64_t(size) * size;
    par::parallel_for(n_pix, [&](int64_t lo_i, int64_t hi_i) {
        for (int64_t p = lo_i; p < hi_i; ++p) {
            double lo = estimates[0].v[size_t(p)] - 2.0 * bounds[0].v[size_t(p)];
            double hi = estimates[0].v[size_t(p)] + 2.0 * bounds[0].v[size_t(p)];
            size_t chosen = 0;
            for (size_t i = 1; i < estimates.size(); ++i) {
                lo = std::max(lo, estimates[i].v[size_t(p)] - 2.0 * bounds[i].v[size_t(p)]);
                hi = std::min(hi, estimates[i].v[size_t(p)] + 2.0 * bounds[i].v[size_t(p)]);
                if (lo > hi) break;
                chosen = i;
            }
            fused.v[size_t(p)] = estimates[chosen].v[size_t(p)];
            sw.indices.v[size_t(p)] = double(chosen + 1);
        }
    });
    return {std::move(fused), std::move(sw)};
}

struct ConfidenceGrid {
    std::vector<double> kappas{0.25, 0.5, 1.0, 2.0, 4.0};
    std::vector<double> exponents{0.5, 1.0, 1.5, 2.0};
};

struct LegoneCalibration {
    ConfidenceParams params;
    VarianceMaps maps;       // corpus-averaged variance maps to reuse at test time
    double best_mean_snr = 0.0;
};

namespace detail {
inline double snr_db_raw(const std::vector<double>& ref, const std::vector<double>& est) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        const double d = ref[i] - est[i];
        num += d * d;
        den += ref[i] * ref[i];
    }
    if (!(den > 0.0)) throw degenerate_error("snr: reference has zero norm");
    if (num == 0.0) return 300.0;
    return std::min(300.0, -10.0 * std::log10(num / den));
}
}  // namespace detail

/// Grid search of (kappa, q): variance maps are estimated per training phantom
/// and pooled, each candidate is scored by mean fused SNR over one held-out
/// noise instance per phantom, ties broken by smaller kappa then smaller q.
inline LegoneCalibration calibrate_confidence(
    const std::vector<Image>& train, const std::vector<Reconstructor>& est,
    const ScanGeometry& geom, const ScanProtocol& protocol, int instances, const Rng& rng,
    const ConfidenceGrid& grid = {},
    const std::function<Sinogram(const Sinogram&)>& sinogram_prep = {}) {
    if (train.empty()) throw config_error("calibrate_confidence: empty training corpus");
    if (grid.kappas.empty() || grid.exponents.empty())
        throw config_error("calibrate_confidence: empty grid");

    std::vector<VarianceMaps> per_phantom;
    per_phantom.reserve(train.size());
    for (size_t t = 0; t < train.size(); ++t)
        per_phantom.push_back(estimate_variance_maps(train[t], est, geom, protocol, instances,
                                                     rng.stream(0x5641 + t), sinogram_prep));
    LegoneCalibration cal;
    cal.maps = average_variance_maps(per_phantom);

    // One scoring stack per phantom, from a noise stream disjoint from the
    // variance-map streams.
    RadonOperator op(geom);
    std::vector<std::vector<Image>> stacks(train.size());
    for (size_t t = 0; t < train.size(); ++t) {
        Sinogram noisy = simulate_noisy_sinogram(op.project(train[t]), protocol,
                                                 rng.stream(0xC0DE + t));
        if (sinogram_prep) noisy = sinogram_prep(noisy);
        for (const auto& e : est) stacks[t].push_back(e.apply(noisy));
    }

    double best = -std::numeric_limits<double>::infinity();
    for (double q : grid.exponents)
        for (double kappa : grid.kappas) {
            const ConfidenceParams cand{kappa, q};
            const auto bounds = stochastic_bounds(cal.maps, cand);
            double mean_snr = 0.0;
            for (size_t t = 0; t < train.size(); ++t) {
                auto [fused, sw] = legone_fuse(stacks[t], bounds);
                (void)sw;
                mean_snr += detail::snr_db_raw(train[t].v, fused.v);
            }
            mean_snr /= double(train.size());
            const bool better =
                mean_snr > best + 1e-12 ||
                (std::fabs(mean_snr - best) <= 1e-12 &&
                 (kappa < cal.params.kappa_cal ||
                  (kappa == cal.params.kappa_cal && q < cal.params.q_exp)));
            if (better) {
                best = mean_snr;
                cal.params = cand;
            }
        }
    cal.best_mean_snr = best;
    return cal;
}

struct Denoise1dResult {
    std::vector<double> output;
    std::vector<int> switch_index;  // 1-based chosen window index per sample
};

/// 1-D reference denoiser: window means over growing radii, bounds
/// rho_i = 2 sigma / sqrt(|window|), and the same prefix-intersection rule.
inline Denoise1dResult legone_denoise_1d(const std::vector<double>& y,
                                         const std::vector<int>& radii, double noise_sigma) {
    if (y.empty()) throw config_error("legone_denoise_1d: empty input");
    if (radii.empty()) throw config_error("legone_denoise_1d: empty radius list");
    for (size_t i = 1; i < radii.size(); ++i)
        if (radii[i] <= radii[i - 1])
            throw config_error("legone_denoise_1d: radii must be strictly increasing");
    if (!(noise_sigma >= 0.0)) throw config_error("legone_denoise_1d: negative sigma");

    const int n = int(y.size());
    // Prefix sums give every window mean in O(1).
    std::vector<double> prefix(size_t(n) + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix[size_t(i) + 1] = prefix[size_t(i)] + y[size_t(i)];

    Denoise1dResult res;
    res.output.resize(y.size());
    res.switch_index.resize(y.size());
    for (int x = 0; x < n; ++x) {
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        double chosen_value = y[size_t(x)];
        int chosen = 1;
        for (size_t i = 0; i < radii.size(); ++i) {
            const int a = std::max(0, x - radii[i]);
            const int b = std::min(n - 1, x + radii[i]);
            const int w = b - a + 1;
            const double mean = (prefix[size_t(b) + 1] - prefix[size_t(a)]) / w;
            const double rho = 2.0 * noise_sigma / std::sqrt(double(w));
            lo = std::max(lo, mean - 2.0 * rho);
            hi = std::min(hi, mean + 2.0 * rho);
            if (i > 0 && lo > hi) break;
            chosen_value = mean;
            chosen = int(i) + 1;
        }
        res.output[size_t(x)] = chosen_value;
        res.switch_index[size_t(x)] = chosen;
    }
    return res;
}

}  // namespace ctfusion
