// Nonlinear fusion of a stack of preliminary reconstructions: per-pixel
// feature extraction, a single-hidden-layer network with a rational sigmoid,
// quasi-Newton training with restarts, and the fused reconstruction rule
// (predicted residual added back to the reference estimate).
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctfusion/core.hpp"
#include "ctfusion/legone.hpp"
#include "ctfusion/optim.hpp"
#include "ctfusion/parallel.hpp"

namespace ctfusion {

/// Shape of one feature vector: residuals of all I estimates against the
/// reference estimate (the one at best_index), followed by the reference's
/// values over a fixed neighborhood (edge-clamped reads).
struct FeatureLayout {
    int n_estimates = 0;  // I
    int best_index = 0;   // which estimate serves as the reference f-bar
    std::vector<std::array<int, 2>> neighborhood;  // (dy, dx) offsets

    static FeatureLayout standard(int n_estimates, int best_index) {
        FeatureLayout l;
        l.n_estimates = n_estimates;
        l.best_index = best_index;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) l.neighborhood.push_back({dy, dx});
        l.validate();
        return l;
    }

    int feature_count() const { return n_estimates + int(neighborhood.size()); }

    void validate() const {
        if (n_estimates < 1) throw config_error("FeatureLayout: need at least one estimate");
        if (best_index < 0 || best_index >= n_estimates)
            throw config_error("FeatureLayout: best_index out of range");
        if (neighborhood.empty()) throw config_error("FeatureLayout: empty neighborhood");
    }
};

/// Componentwise affine map taking raw features onto [0,1], plus the scalar
/// map for targets. Degenerate (constant) components keep unit scale so the
/// round trip stays exact.
struct NormRecord {
    std::vector<double> feat_lo, feat_scale;  // x' = (x - lo) * scale
    double target_lo = 0.0, target_scale = 1.0;

    void normalize_features(double* x, int K) const {
        for (int k = 0; k < K; ++k) x[k] = (x[k] - feat_lo[size_t(k)]) * feat_scale[size_t(k)];
    }
    double normalize_target(double t) const { return (t - target_lo) * target_scale; }
    double denormalize_target(double t) const { return t / target_scale + target_lo; }
};

/// One-hidden-layer network y = sum_j v_j sigma(sum_k w_kj x_k + w_{K+1,j})
/// with sigma(z) = z / (1 + |z|). Weights are stored with the bias as the
/// last row of w; the net operates in the normalized feature/target domain.
struct FusionNet {
    int K = 0;
    int N = 0;
    std::vector<double> w;  // (K+1) rows x N columns, row-major
    std::vector<double> v;  // N
    NormRecord norm;
    FeatureLayout layout;
    std::vector<std::string> bank_tags;  // tags of the estimators it was trained with

    void validate() const {
        layout.validate();
        if (K != layout.feature_count()) throw config_error("FusionNet: K/layout mismatch");
        if (N < 1) throw config_error("FusionNet: need at least one neuron");
        if (w.size() != size_t(K + 1) * N || v.size() != size_t(N))
            throw shape_error("FusionNet: weight shape mismatch");
        for (double x : w)
            if (!std::isfinite(x)) throw range_error("FusionNet: non-finite hidden weight");
        for (double x : v)
            if (!std::isfinite(x)) throw range_error("FusionNet: non-finite output weight");
        if (int(norm.feat_lo.size()) != K || int(norm.feat_scale.size()) != K)
            throw shape_error("FusionNet: normalization record mismatch");
    }
};

inline double nn_sigmoid(double z) { return z / (1.0 + std::fabs(z)); }
inline double nn_sigmoid_derivative(double z) {
    const double d = 1.0 + std::fabs(z);
    return 1.0 / (d * d);
}

/// Forward pass in the normalized domain. |output| <= sum |v_j| always.
inline double nn_forward(const FusionNet& net, const double* x) {
    double y = 0.0;
    for (int j = 0; j < net.N; ++j) {
        double z = net.w[size_t(net.K) * net.N + size_t(j)];  // bias row
        for (int k = 0; k < net.K; ++k) z += net.w[size_t(k) * net.N + size_t(j)] * x[k];
        y += net.v[size_t(j)] * nn_sigmoid(z);
    }
    return y;
}

inline double nn_forward(const FusionNet& net, const std::vector<double>& x) {
    if (int(x.size()) != net.K) throw shape_error("nn_forward: feature length mismatch");
    return nn_forward(net, x.data());
}

/// Writes the K raw feature values of pixel (py, px) into out.
inline void extract_features(const std::vector<Image>& estimates, const FeatureLayout& layout,
                             int py, int px, double* out) {
    const Image& fbar = estimates[size_t(layout.best_index)];
    const double center = fbar.at(py, px);
    for (int i = 0; i < layout.n_estimates; ++i)
        out[i] = estimates[size_t(i)].at(py, px) - center;
    const int n = fbar.size;
    for (size_t t = 0; t < layout.neighborhood.size(); ++t) {
        const int y = std::clamp(py + layout.neighborhood[t][0], 0, n - 1);
        const int x = std::clamp(px + layout.neighborhood[t][1], 0, n - 1);
        out[layout.n_estimates + int(t)] = fbar.at(y, x);
    }
}

inline std::vector<double> extract_features(const std::vector<Image>& estimates,
                                            const FeatureLayout& layout, int py, int px) {
    layout.validate();
    if (int(estimates.size()) != layout.n_estimates)
        throw config_error("extract_features: estimate count does not match layout");
    std::vector<double> x(size_t(layout.feature_count()));
    extract_features(estimates, layout, py, px, x.data());
    return x;
}

/// Raw sampled feature rows and residual targets, plus the normalization
/// computed from them. Rows stay raw; training normalizes on the fly.
struct TrainingBatch {
    int K = 0;
    std::vector<double> features;  // T x K row-major, raw
    std::vector<double> targets;   // T, raw residuals f(p) - fbar(p)
    NormRecord norm;
    bool clipped = false;  // sampling request exceeded the eligible pixels

    size_t rows() const { return K > 0 ? targets.size() : 0; }

    void validate() const {
        if (K < 1) throw config_error("TrainingBatch: empty layout");
        if (features.size() != targets.size() * size_t(K))
            throw shape_error("TrainingBatch: row/target mismatch");
        for (double t : targets)
            if (!std::isfinite(t)) throw range_error("TrainingBatch: non-finite target");
    }

    void append(const TrainingBatch& other) {
        if (other.K != K) throw shape_error("TrainingBatch::append: feature width mismatch");
        features.insert(features.end(), other.features.begin(), other.features.end());
        targets.insert(targets.end(), other.targets.begin(), other.targets.end());
        clipped = clipped || other.clipped;
        recompute_normalization();
    }

    void recompute_normalization() {
        norm.feat_lo.assign(size_t(K), 0.0);
        norm.feat_scale.assign(size_t(K), 1.0);
        if (targets.empty()) return;
        std::vector<double> hi(size_t(K), -1e300);
        std::fill(norm.feat_lo.begin(), norm.feat_lo.end(), 1e300);
        for (size_t t = 0; t < targets.size(); ++t)
            for (int k = 0; k < K; ++k) {
                const double x = features[t * size_t(K) + size_t(k)];
                norm.feat_lo[size_t(k)] = std::min(norm.feat_lo[size_t(k)], x);
                hi[size_t(k)] = std::max(hi[size_t(k)], x);
            }
        for (int k = 0; k < K; ++k) {
            const double range = hi[size_t(k)] - norm.feat_lo[size_t(k)];
            norm.feat_scale[size_t(k)] = range > 1e-300 ? 1.0 / range : 1.0;
        }
        double tlo = 1e300, thi = -1e300;
        for (double t : targets) {
            tlo = std::min(tlo, t);
            thi = std::max(thi, t);
        }
        norm.target_lo = tlo;
        norm.target_scale = (thi - tlo) > 1e-300 ? 1.0 / (thi - tlo) : 1.0;
    }
};

/// Samples pixel positions (without replacement, equal per-image quotas) from
/// aligned (reference, estimate stack) pairs; targets are the residuals
/// against each stack's reference estimate. An optional 0/1 mask restricts
/// the eligible pixels. Requests beyond the eligible count are clipped.
inline TrainingBatch build_training_batch(const std::vector<Image>& refs,
                                          const std::vector<std::vector<Image>>& stacks,
                                          const FeatureLayout& layout, size_t sample_count,
                                          const Rng& rng, const Image* mask = nullptr) {
    layout.validate();
    if (refs.empty() || refs.size() != stacks.size())
        throw config_error("build_training_batch: need matching references and stacks");
    for (const auto& stack : stacks)
        if (int(stack.size()) != layout.n_estimates)
            throw config_error("build_training_batch: stack size does not match layout");
    if (sample_count == 0) throw config_error("build_training_batch: zero sample request");

    TrainingBatch batch;
    batch.K = layout.feature_count();

    const size_t quota = std::max<size_t>(1, sample_count / refs.size());
    for (size_t t = 0; t < refs.size(); ++t) {
        const Image& ref = refs[t];
        const std::vector<Image>& stack = stacks[t];
        const Image& fbar = stack[size_t(layout.best_index)];
        if (mask && mask->size != ref.size)
            throw shape_error("build_training_batch: mask size mismatch");

        std::vector<int> eligible;
        for (int p = 0; p < ref.size * ref.size; ++p)
            if (!mask || mask->v[size_t(p)] != 0.0) eligible.push_back(p);
        if (eligible.empty()) throw config_error("build_training_batch: no eligible pixels");

        size_t take = quota;
        if (take > eligible.size()) {
            take = eligible.size();
            batch.clipped = true;
        }
        Rng r = rng.stream(0x5A17ULL + t);
        for (size_t i = 0; i < take; ++i) {  // partial Fisher-Yates
            const size_t j = i + size_t(r.next_below(uint64_t(eligible.size() - i)));
            std::swap(eligible[i], eligible[j]);
        }

        std::vector<double> x(size_t(batch.K));
        for (size_t i = 0; i < take; ++i) {
            const int p = eligible[i];
            const int py = p / ref.size, px = p % ref.size;
            extract_features(stack, layout, py, px, x.data());
            batch.features.insert(batch.features.end(), x.begin(), x.end());
            batch.targets.push_back(ref.at(py, px) - fbar.at(py, px));
        }
    }
    batch.recompute_normalization();
    batch.validate();
    return batch;
}

namespace detail {

/// Squared-error objective and gradient over the packed parameter vector
/// theta = [w rows 0..K, then v], evaluated on normalized rows.
/// Deterministic parallel reduction over batch rows.
inline double nn_objective_gradient(const std::vector<double>& theta, std::vector<double>& grad,
                                    int K, int N, const std::vector<double>& xnorm,
                                    const std::vector<double>& tnorm) {
    const size_t wlen = size_t(K + 1) * N;
    const double* w = theta.data();
    const double* v = theta.data() + wlen;
    const size_t T = tnorm.size();

    struct Acc {
        double obj = 0.0;
        std::vector<double> g;
    };
    Acc zero;
    zero.g.assign(theta.size(), 0.0);
    Acc total = par::parallel_reduce(
        int64_t(T), zero,
        [&](int64_t lo, int64_t hi, Acc acc) {
            std::vector<double> z(static_cast<size_t>(N));
            std::vector<double> s(static_cast<size_t>(N));
            std::vector<double> ds(static_cast<size_t>(N));
            for (int64_t t = lo; t < hi; ++t) {
                const double* x = xnorm.data() + size_t(t) * K;
                double y = 0.0;
                for (int j = 0; j < N; ++j) {
                    double zj = w[size_t(K) * N + size_t(j)];
                    for (int k = 0; k < K; ++k) zj += w[size_t(k) * N + size_t(j)] * x[k];
                    z[size_t(j)] = zj;
                    s[size_t(j)] = nn_sigmoid(zj);
                    ds[size_t(j)] = nn_sigmoid_derivative(zj);
                    y += v[size_t(j)] * s[size_t(j)];
                }
                const double r = y - tnorm[size_t(t)];
                acc.obj += r * r;
                const double e = 2.0 * r;
                for (int j = 0; j < N; ++j) {
                    acc.g[wlen + size_t(j)] += e * s[size_t(j)];
                    const double back = e * v[size_t(j)] * ds[size_t(j)];
                    for (int k = 0; k < K; ++k)
                        acc.g[size_t(k) * N + size_t(j)] += back * x[k];
                    acc.g[size_t(K) * N + size_t(j)] += back;
                }
            }
            return acc;
        },
        [](Acc a, const Acc& b) {
            a.obj += b.obj;
            for (size_t i = 0; i < a.g.size(); ++i) a.g[i] += b.g[i];
            return a;
        });
    grad = std::move(total.g);
    return total.obj;
}

}  // namespace detail

/// Objective/gradient entry points over an explicit net (test surface).
inline double nn_objective(const FusionNet& net, const TrainingBatch& batch,
                           std::vector<double>* grad_out = nullptr) {
    batch.validate();
    if (batch.K != net.K) throw shape_error("nn_objective: feature width mismatch");
    const size_t T = batch.rows();
    std::vector<double> xnorm = batch.features;
    std::vector<double> tnorm(T);
    for (size_t t = 0; t < T; ++t) {
        batch.norm.normalize_features(xnorm.data() + t * size_t(batch.K), batch.K);
        tnorm[t] = batch.norm.normalize_target(batch.targets[t]);
    }
    std::vector<double> theta = net.w;
    theta.insert(theta.end(), net.v.begin(), net.v.end());
    std::vector<double> grad;
    const double obj = detail::nn_objective_gradient(theta, grad, net.K, net.N, xnorm, tnorm);
    if (grad_out) *grad_out = std::move(grad);
    return obj;
}

struct NetTrainConfig {
    int neurons = 24;
    int restarts = 3;
    QuasiNewtonConfig optimizer;  // defaults: 500 iters, 1e-6 gradient stop
};

struct NetTrainResult {
    FusionNet net;
    std::vector<std::vector<double>> traces;  // one monotone trace per restart
    std::vector<double> final_objectives;
    int best_restart = -1;
};

/// Best-of-R quasi-Newton fits of the squared-error objective on the
/// normalized batch. Initial weights are uniform in [-0.5, 0.5]/sqrt(K).
inline NetTrainResult train_net(const TrainingBatch& batch, const FeatureLayout& layout,
                                const NetTrainConfig& cfg, const Rng& rng) {
    batch.validate();
    layout.validate();
    const int K = layout.feature_count();
    if (batch.K != K) throw config_error("train_net: batch width does not match layout");
    if (batch.rows() < size_t(K)) throw config_error("train_net: need at least K rows");
    if (cfg.neurons < 1 || cfg.restarts < 1)
        throw config_error("train_net: need positive neurons and restarts");

    const int N = cfg.neurons;
    const size_t T = batch.rows();
    std::vector<double> xnorm = batch.features;
    std::vector<double> tnorm(T);
    for (size_t t = 0; t < T; ++t) {
        batch.norm.normalize_features(xnorm.data() + t * size_t(K), K);
        tnorm[t] = batch.norm.normalize_target(batch.targets[t]);
    }

    auto objective = [&](const std::vector<double>& theta, std::vector<double>& grad) {
        return detail::nn_objective_gradient(theta, grad, K, N, xnorm, tnorm);
    };

    NetTrainResult result;
    const size_t n_params = size_t(K + 1) * N + size_t(N);
    const double init_scale = 1.0 / std::sqrt(double(K));
    double best = 0.0;
    std::vector<double> best_theta;
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng init_rng = rng.stream(0xBEE5ULL + uint64_t(r));
        std::vector<double> theta(n_params);
        for (double& p : theta) p = init_rng.uniform(-0.5, 0.5) * init_scale;
        QuasiNewtonResult qn = quasi_newton_minimize(objective, std::move(theta), cfg.optimizer);
        result.traces.push_back(qn.trace);
        result.final_objectives.push_back(qn.fx);
        if (result.best_restart < 0 || qn.fx < best) {
            best = qn.fx;
            best_theta = std::move(qn.x);
            result.best_restart = r;
        }
    }

    FusionNet net;
    net.K = K;
    net.N = N;
    net.layout = layout;
    net.norm = batch.norm;
    net.w.assign(best_theta.begin(), best_theta.begin() + long(size_t(K + 1) * N));
    net.v.assign(best_theta.begin() + long(size_t(K + 1) * N), best_theta.end());
    net.validate();
    result.net = std::move(net);
    return result;
}

/// Per-pixel fusion of precomputed estimates: predicted residual added back
/// to the reference estimate; pixels where the optional mask is zero stay 0.
inline Image spades_fuse(const std::vector<Image>& estimates, const FusionNet& net,
                         const Image* mask = nullptr) {
    net.validate();
    if (int(estimates.size()) != net.layout.n_estimates)
        throw config_error("spades_fuse: estimate count does not match the trained layout");
    const int n = estimates.front().size;
    for (const Image& e : estimates)
        if (e.size != n) throw shape_error("spades_fuse: estimate size mismatch");
    if (mask && mask->size != n) throw shape_error("spades_fuse: mask size mismatch");

    const Image& fbar = estimates[size_t(net.layout.best_index)];
    Image out(n);
    par::parallel_for(n, [&](int64_t ylo, int64_t yhi) {
        std::vector<double> x(size_t(net.K));
        for (int64_t y = ylo; y < yhi; ++y)
            for (int px = 0; px < n; ++px) {
                if (mask && mask->at(int(y), px) == 0.0) continue;
                extract_features(estimates, net.layout, int(y), px, x.data());
                net.norm.normalize_features(x.data(), net.K);
                const double resid = net.norm.denormalize_target(nn_forward(net, x.data()));
                out.at(int(y), px) = resid + fbar.at(int(y), px);
            }
    });
    return out;
}

/// Full pipeline: run every estimator of the bank on the scan, then fuse.
/// The bank must carry exactly the tags the net was trained with.
inline Image spades_reconstruct(const Sinogram& g, const std::vector<Reconstructor>& bank,
                                const FusionNet& net, const Image* mask = nullptr) {
    if (int(bank.size()) != net.layout.n_estimates)
        throw config_error("spades_reconstruct: bank size does not match the trained layout");
    if (net.bank_tags.size() != bank.size())
        throw config_error("spades_reconstruct: net carries no tags for this bank");
    for (size_t i = 0; i < bank.size(); ++i)
        if (bank[i].tag != net.bank_tags[i])
            throw config_error("spades_reconstruct: estimator tag mismatch at position " +
                               std::to_string(i) + " ('" + bank[i].tag + "' vs trained '" +
                               net.bank_tags[i] + "')");
    std::vector<Image> estimates;
    estimates.reserve(bank.size());
    for (const Reconstructor& rec : bank) estimates.push_back(rec.apply(g));
    return spades_fuse(estimates, net, mask);
}

}  // namespace ctfusion
