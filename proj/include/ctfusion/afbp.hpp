// Trainable linear reconstruction: distance-dependent 2-D sinogram kernels,
// back-projection, and a 2-D image post-filter. Includes both training
// objectives (noisy-data quality, noiseless Gaussian-target blur), the ROI
// masking operators, and the Gaussian blur measure of a transform.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctfusion/core.hpp"
#include "ctfusion/fbp.hpp"
#include "ctfusion/noise.hpp"
#include "ctfusion/optim.hpp"
#include "ctfusion/parallel.hpp"
#include "ctfusion/radon.hpp"

namespace ctfusion {

/// Zeroes sinogram bins whose line misses the measured disk. Idempotent.
inline Sinogram truncate_projections(const Sinogram& g, const RoiSpec& roi) {
    Sinogram out = g;
    for (int j = 0; j < g.n_bins; ++j)
        if (std::fabs(g.geom.bin_s(j)) > roi.measurement_radius + 1e-12)
            for (int k = 0; k < g.n_angles; ++k) out.at(k, j) = 0.0;
    return out;
}

/// Zeroes image pixels outside the ROI disk. Idempotent.
inline Image mask_roi(const Image& f, const RoiSpec& roi, const ScanGeometry& geom) {
    if (f.size != geom.image_size) throw shape_error("mask_roi: image size mismatch");
    Image mask = roi_pixel_mask(roi, geom);
    Image out = f;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= mask.v[i];
    return out;
}

/// Parameter set of the adaptive reconstruction: one 2-D sinogram kernel per
/// distance segment plus a single 2-D image kernel. All kernel extents are
/// odd and centered. A bank is bound to the geometry/ROI it was built for.
struct KernelBank {
    ScanGeometry geom;
    RoiSpec roi;
    double coverage = 0.0;  // segments partition |s| in [0, coverage]
    int d = 0;
    int angle_extent = 0;
    int bins_extent = 0;
    int image_kernel_size = 0;
    bool completed_input = false;  // complete the measured band before filtering
    std::vector<std::vector<double>> sino_kernels;  // d kernels, row-major [angle][bin]
    std::vector<double> image_kernel;               // image_kernel_size^2 row-major
    std::string tag;

    void validate() const {
        if (d < 1 || int(sino_kernels.size()) != d)
            throw config_error("KernelBank: segment count mismatch");
        if (angle_extent < 1 || angle_extent % 2 == 0)
            throw config_error("KernelBank: angle extent must be odd and positive");
        if (bins_extent < 1 || bins_extent % 2 == 0)
            throw config_error("KernelBank: bins extent must be odd and positive");
        if (image_kernel_size < 1 || image_kernel_size % 2 == 0)
            throw config_error("KernelBank: image kernel size must be odd and positive");
        if (!(coverage > 0.0)) throw config_error("KernelBank: coverage must be positive");
        for (const auto& k : sino_kernels)
            if (int(k.size()) != angle_extent * bins_extent)
                throw shape_error("KernelBank: sinogram kernel size mismatch");
        if (int(image_kernel.size()) != image_kernel_size * image_kernel_size)
            throw shape_error("KernelBank: image kernel size mismatch");
    }

    /// Unique distance segment of bin j, or -1 when |s_j| exceeds coverage.
    int segment_of_bin(int j) const {
        const double t = std::fabs(geom.bin_s(j));
        if (t > coverage + 1e-12) return -1;
        const int idx = int(t / coverage * d);
        return std::min(idx, d - 1);
    }

    /// [lo, hi) bounds of segment i in |s|.
    std::pair<double, double> segment_bounds(int i) const {
        return {coverage * i / d, coverage * (i + 1) / d};
    }

    size_t parameter_count_sino() const { return size_t(d) * angle_extent * bins_extent; }
    size_t parameter_count_image() const { return image_kernel.size(); }
};

inline int default_image_kernel_size(int image_size) {
    const int r = int(std::lround(std::sqrt(double(image_size))));
    return r | 1;  // next odd
}

namespace detail {

/// Extended sinogram read: the angle axis wraps over pi with a bin mirror
/// (g(theta + pi, s) = g(theta, -s)); the bin axis is zero-padded.
inline double sino_read_extended(const Sinogram& g, int k_ext, int m_ext) {
    int k = k_ext, m = m_ext;
    if (k < 0) {
        k += g.n_angles;
        m = g.n_bins - 1 - m;
    } else if (k >= g.n_angles) {
        k -= g.n_angles;
        m = g.n_bins - 1 - m;
    }
    if (m < 0 || m >= g.n_bins) return 0.0;
    return g.at(k, m);
}

/// Scatter counterpart of sino_read_extended (exact transpose).
inline void sino_scatter_extended(Sinogram& g, int k_ext, int m_ext, double value) {
    int k = k_ext, m = m_ext;
    if (k < 0) {
        k += g.n_angles;
        m = g.n_bins - 1 - m;
    } else if (k >= g.n_angles) {
        k -= g.n_angles;
        m = g.n_bins - 1 - m;
    }
    if (m < 0 || m >= g.n_bins) return;
    g.at(k, m) += value;
}

}  // namespace detail

/// Distance-dependent 2-D filtering of the sinogram: each output bin within
/// coverage is produced by its segment's kernel; bins on the negative-s side
/// use the bin-mirrored kernel so the filter commutes with bin reflection.
/// Bins beyond coverage are zero.
inline Sinogram bank_filter_sinogram(const Sinogram& g, const KernelBank& bank) {
    if (!g.geom.same_grid(bank.geom)) throw shape_error("bank_filter_sinogram: geometry mismatch");
    const int A = bank.angle_extent / 2, B = bank.bins_extent / 2;
    const int be = bank.bins_extent;
    Sinogram out(g.geom);
    par::parallel_for(g.n_angles, [&](int64_t klo, int64_t khi) {
        for (int64_t k = klo; k < khi; ++k)
            for (int j = 0; j < g.n_bins; ++j) {
                const int seg = bank.segment_of_bin(j);
                if (seg < 0) continue;
                const bool positive = g.geom.bin_s(j) >= -1e-12;
                const auto& ker = bank.sino_kernels[size_t(seg)];
                double acc = 0.0;
                for (int a = -A; a <= A; ++a)
                    for (int b = -B; b <= B; ++b) {
                        const int m_ext = positive ? j - b : j + b;
                        acc += ker[size_t(a + A) * be + size_t(b + B)] *
                               detail::sino_read_extended(g, int(k) - a, m_ext);
                    }
                out.at(int(k), j) = acc;
            }
    });
    return out;
}

/// Gradient of <w, bank_filter_sinogram(g)> with respect to the kernels:
/// exact transpose of the forward filtering at fixed data g.
inline std::vector<std::vector<double>> bank_filter_kernel_gradient(const Sinogram& g,
                                                                    const Sinogram& w,
                                                                    const KernelBank& bank) {
    const int A = bank.angle_extent / 2, B = bank.bins_extent / 2;
    const int be = bank.bins_extent;
    const size_t per_kernel = size_t(bank.angle_extent) * be;
    using Grad = std::vector<double>;
    Grad zero(size_t(bank.d) * per_kernel, 0.0);
    Grad flat = par::parallel_reduce(
        g.n_angles, zero,
        [&](int64_t klo, int64_t khi, Grad acc) {
            for (int64_t k = klo; k < khi; ++k)
                for (int j = 0; j < g.n_bins; ++j) {
                    const int seg = bank.segment_of_bin(j);
                    if (seg < 0) continue;
                    const double wv = w.at(int(k), j);
                    if (wv == 0.0) continue;
                    const bool positive = g.geom.bin_s(j) >= -1e-12;
                    double* gk = acc.data() + size_t(seg) * per_kernel;
                    for (int a = -A; a <= A; ++a)
                        for (int b = -B; b <= B; ++b) {
                            const int m_ext = positive ? j - b : j + b;
                            gk[size_t(a + A) * be + size_t(b + B)] +=
                                wv * detail::sino_read_extended(g, int(k) - a, m_ext);
                        }
                }
            return acc;
        },
        [](Grad a, const Grad& b) {
            for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
            return a;
        });
    std::vector<std::vector<double>> grad(size_t(bank.d));
    for (int i = 0; i < bank.d; ++i)
        grad[size_t(i)].assign(flat.begin() + i * long(per_kernel),
                               flat.begin() + (i + 1) * long(per_kernel));
    return grad;
}

/// Centered odd-kernel 2-D convolution with zero padding.
inline Image convolve_image(const Image& f, const std::vector<double>& kernel, int ksize) {
    const int H = ksize / 2;
    Image out(f.size);
    par::parallel_for(f.size, [&](int64_t ylo, int64_t yhi) {
        for (int64_t y = ylo; y < yhi; ++y)
            for (int x = 0; x < f.size; ++x) {
                double acc = 0.0;
                for (int dy = -H; dy <= H; ++dy) {
                    const int sy = int(y) - dy;
                    if (sy < 0 || sy >= f.size) continue;
                    const double* krow = kernel.data() + size_t(dy + H) * ksize;
                    for (int dx = -H; dx <= H; ++dx) {
                        const int sx = x - dx;
                        if (sx < 0 || sx >= f.size) continue;
                        acc += krow[dx + H] * f.at(sy, sx);
                    }
                }
                out.at(int(y), x) = acc;
            }
    });
    return out;
}

/// Transpose of convolve_image in the data argument (correlation).
inline Image convolve_image_adjoint_data(const Image& r, const std::vector<double>& kernel,
                                         int ksize) {
    const int H = ksize / 2;
    Image out(r.size);
    par::parallel_for(r.size, [&](int64_t ylo, int64_t yhi) {
        for (int64_t sy = ylo; sy < yhi; ++sy)
            for (int sx = 0; sx < r.size; ++sx) {
                double acc = 0.0;
                for (int dy = -H; dy <= H; ++dy) {
                    const int y = int(sy) + dy;
                    if (y < 0 || y >= r.size) continue;
                    const double* krow = kernel.data() + size_t(dy + H) * ksize;
                    for (int dx = -H; dx <= H; ++dx) {
                        const int x = sx + dx;
                        if (x < 0 || x >= r.size) continue;
                        acc += krow[dx + H] * r.at(y, x);
                    }
                }
                out.at(int(sy), sx) = acc;
            }
    });
    return out;
}

/// Gradient of <r, convolve_image(f, kernel)> with respect to the kernel.
inline std::vector<double> convolve_image_kernel_gradient(const Image& f, const Image& r,
                                                          int ksize) {
    const int H = ksize / 2;
    using Grad = std::vector<double>;
    Grad zero(size_t(ksize) * ksize, 0.0);
    return par::parallel_reduce(
        f.size, zero,
        [&](int64_t ylo, int64_t yhi, Grad acc) {
            for (int64_t y = ylo; y < yhi; ++y)
                for (int x = 0; x < f.size; ++x) {
                    const double rv = r.at(int(y), x);
                    if (rv == 0.0) continue;
                    for (int dy = -H; dy <= H; ++dy) {
                        const int sy = int(y) - dy;
                        if (sy < 0 || sy >= f.size) continue;
                        for (int dx = -H; dx <= H; ++dx) {
                            const int sx = x - dx;
                            if (sx < 0 || sx >= f.size) continue;
                            acc[size_t(dy + H) * ksize + size_t(dx + H)] += rv * f.at(sy, sx);
                        }
                    }
                }
            return acc;
        },
        [](Grad a, const Grad& b) {
            for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
            return a;
        });
}

/// Full adaptive pipeline: segment filtering, back-projection, image filter.
/// Linear in g. When the bank was trained on completed inputs, the measured
/// band is replicated outward first.
inline Image apply_afbp(const Sinogram& g, const KernelBank& bank, const RadonOperator& op) {
    if (!g.geom.same_grid(bank.geom) || !op.geometry().same_grid(bank.geom))
        throw shape_error("apply_afbp: geometry mismatch");
    bank.validate();
    const Sinogram* input = &g;
    Sinogram completed;
    if (bank.completed_input) {
        completed = complete_sinogram(g, measured_band(bank.roi, bank.geom));
        input = &completed;
    }
    Image back = op.backproject(bank_filter_sinogram(*input, bank));
    return convolve_image(back, bank.image_kernel, bank.image_kernel_size);
}

/// Starting point for training: each segment kernel holds the (scaled) taps
/// of the given 1-D projection filter in its central angle row, and the image
/// kernel is a delta — i.e. the bank starts out as plain FBP restricted to
/// its coverage.
inline KernelBank make_initial_bank(const ScanGeometry& geom, const RoiSpec& roi, int d,
                                    int angle_extent, int bins_extent, int image_kernel_size,
                                    const ProjectionFilter1D& filter, double coverage,
                                    bool completed_input = false) {
    KernelBank bank;
    bank.geom = geom;
    bank.roi = roi;
    bank.coverage = coverage > 0.0 ? coverage : roi.measurement_radius;
    bank.d = d;
    bank.angle_extent = angle_extent;
    bank.bins_extent = bins_extent;
    bank.image_kernel_size = image_kernel_size;
    bank.completed_input = completed_input;

    const int A = angle_extent / 2, B = bins_extent / 2;
    const double fbp_scale = geom.fbp_norm * M_PI / geom.n_angles * geom.bin_pitch();
    const auto taps = filter_impulse_taps(filter, B);
    std::vector<double> kernel(size_t(angle_extent) * bins_extent, 0.0);
    for (int b = -B; b <= B; ++b)
        kernel[size_t(A) * bins_extent + size_t(b + B)] = fbp_scale * taps[size_t(std::abs(b))];
    bank.sino_kernels.assign(size_t(d), kernel);

    bank.image_kernel.assign(size_t(image_kernel_size) * image_kernel_size, 0.0);
    bank.image_kernel[size_t(image_kernel_size) * image_kernel_size / 2] = 1.0;
    bank.validate();
    return bank;
}

/// Alternating-CG training bookkeeping. The recorded trace holds the
/// objective value after the initial point and after every half-step; the
/// trainer guarantees it never increases (an offending half-step is reverted
/// and training stops).
struct TrainingRun {
    std::string objective_tag;  // "quality" | "blur(sigma)"
    int cg_iters = 8;           // CG budget per half-step
    int max_alternations = 6;
    double tol = 1e-5;  // stop when the relative objective change falls below
    std::vector<double> trace;
    int half_steps = 0;
};

/// Fixed data of one least-squares training problem: inputs (already
/// truncated/completed as intended), masked targets, and the pixel mask the
/// residual is restricted to.
struct AfbpTrainingSet {
    std::vector<Sinogram> inputs;
    std::vector<Image> targets;  // compared against masked outputs
    Image mask;                  // 0/1 residual weights

    void validate(const ScanGeometry& geom) const {
        if (inputs.empty() || inputs.size() != targets.size())
            throw config_error("AfbpTrainingSet: need matching nonempty inputs/targets");
        for (const auto& s : inputs)
            if (!s.geom.same_grid(geom)) throw shape_error("AfbpTrainingSet: geometry mismatch");
        for (const auto& t : targets)
            if (t.size != geom.image_size) throw shape_error("AfbpTrainingSet: target mismatch");
        if (mask.size != geom.image_size) throw shape_error("AfbpTrainingSet: mask mismatch");
    }
};

namespace detail {

inline void flatten_sino_kernels(const KernelBank& bank, std::vector<double>& x) {
    x.clear();
    for (const auto& k : bank.sino_kernels) x.insert(x.end(), k.begin(), k.end());
}

inline void unflatten_sino_kernels(const std::vector<double>& x, KernelBank& bank) {
    const size_t per_kernel = size_t(bank.angle_extent) * bank.bins_extent;
    for (int i = 0; i < bank.d; ++i)
        std::copy(x.begin() + i * long(per_kernel), x.begin() + (i + 1) * long(per_kernel),
                  bank.sino_kernels[size_t(i)].begin());
}

}  // namespace detail

/// Sum over the set of ||mask .* (T_kappa(g) - target)||^2.
inline double afbp_objective(const AfbpTrainingSet& set, const KernelBank& bank,
                             const RadonOperator& op) {
    double obj = 0.0;
    for (size_t i = 0; i < set.inputs.size(); ++i) {
        // The set's inputs are already in the bank's input convention.
        Image back = op.backproject(bank_filter_sinogram(set.inputs[i], bank));
        Image out = convolve_image(back, bank.image_kernel, bank.image_kernel_size);
        for (size_t p = 0; p < out.v.size(); ++p) {
            const double r = set.mask.v[p] * (out.v[p] - set.targets[i].v[p]);
            obj += r * r;
        }
    }
    return obj;
}

/// Alternating linear least squares: fix the image kernel and CG-solve for
/// the sinogram kernels, then the reverse, until the relative objective
/// change drops below run.tol. Objectives are recorded after every
/// half-step and never increase.
inline KernelBank train_afbp(const AfbpTrainingSet& set, KernelBank bank, TrainingRun& run) {
    bank.validate();
    set.validate(bank.geom);
    RadonOperator op(bank.geom);

    const size_t n_inst = set.inputs.size();
    const size_t n_pix = size_t(bank.geom.image_size) * bank.geom.image_size;

    // Stacked masked-target vector, shared by both half-steps.
    std::vector<double> b(n_inst * n_pix);
    for (size_t i = 0; i < n_inst; ++i)
        for (size_t p = 0; p < n_pix; ++p)
            b[i * n_pix + p] = set.mask.v[p] * set.targets[i].v[p];

    double obj = afbp_objective(set, bank, op);
    if (!std::isfinite(obj)) throw training_error("train_afbp: non-finite initial objective");
    run.trace.clear();
    run.trace.push_back(obj);
    run.half_steps = 0;

    KernelBank scratch = bank;  // carries candidate kernels inside the operators

    auto apply_p = [&](const std::vector<double>& x, std::vector<double>& out) {
        detail::unflatten_sino_kernels(x, scratch);
        for (size_t i = 0; i < n_inst; ++i) {
            Image back = op.backproject(bank_filter_sinogram(set.inputs[i], scratch));
            Image img = convolve_image(back, scratch.image_kernel, scratch.image_kernel_size);
            for (size_t p = 0; p < n_pix; ++p) out[i * n_pix + p] = set.mask.v[p] * img.v[p];
        }
    };
    auto adjoint_p = [&](const std::vector<double>& r, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        const size_t per_kernel = size_t(bank.angle_extent) * bank.bins_extent;
        for (size_t i = 0; i < n_inst; ++i) {
            Image masked(bank.geom.image_size);
            for (size_t p = 0; p < n_pix; ++p) masked.v[p] = set.mask.v[p] * r[i * n_pix + p];
            Image z = convolve_image_adjoint_data(masked, scratch.image_kernel,
                                                  scratch.image_kernel_size);
            Sinogram w = op.project(z);
            auto grad = bank_filter_kernel_gradient(set.inputs[i], w, scratch);
            for (int s = 0; s < bank.d; ++s)
                for (size_t t = 0; t < per_kernel; ++t)
                    out[size_t(s) * per_kernel + t] += grad[size_t(s)][t];
        }
    };

    // Back-projected filtered inputs, fixed during an image-kernel half-step.
    std::vector<Image> h(n_inst);
    auto apply_a = [&](const std::vector<double>& x, std::vector<double>& out) {
        for (size_t i = 0; i < n_inst; ++i) {
            Image img = convolve_image(h[i], x, scratch.image_kernel_size);
            for (size_t p = 0; p < n_pix; ++p) out[i * n_pix + p] = set.mask.v[p] * img.v[p];
        }
    };
    auto adjoint_a = [&](const std::vector<double>& r, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (size_t i = 0; i < n_inst; ++i) {
            Image masked(bank.geom.image_size);
            for (size_t p = 0; p < n_pix; ++p) masked.v[p] = set.mask.v[p] * r[i * n_pix + p];
            auto grad = convolve_image_kernel_gradient(h[i], masked, scratch.image_kernel_size);
            for (size_t t = 0; t < grad.size(); ++t) out[t] += grad[t];
        }
    };

    auto record = [&](double next_obj) -> bool {
        // Returns false when the half-step must be rejected.
        if (!std::isfinite(next_obj)) throw training_error("train_afbp: diverged", run.trace);
        if (next_obj > run.trace.back()) return false;
        run.trace.push_back(next_obj);
        ++run.half_steps;
        return true;
    };

    for (int alt = 0; alt < run.max_alternations; ++alt) {
        const double before_alt = run.trace.back();

        // Half-step 1: sinogram kernels, image kernel fixed.
        {
            std::vector<double> x;
            detail::flatten_sino_kernels(bank, x);
            scratch = bank;
            CgnrResult cg = cgnr_solve(apply_p, adjoint_p, b, std::move(x), run.cg_iters);
            KernelBank candidate = bank;
            detail::unflatten_sino_kernels(cg.x, candidate);
            const double next = afbp_objective(set, candidate, op);
            if (!record(next)) break;
            bank = candidate;
        }

        // Half-step 2: image kernel, sinogram kernels fixed.
        {
            scratch = bank;
            for (size_t i = 0; i < n_inst; ++i)
                h[i] = op.backproject(bank_filter_sinogram(set.inputs[i], bank));
            CgnrResult cg = cgnr_solve(apply_a, adjoint_a, b, bank.image_kernel, run.cg_iters);
            KernelBank candidate = bank;
            candidate.image_kernel = cg.x;
            const double next = afbp_objective(set, candidate, op);
            if (!record(next)) break;
            bank = candidate;
        }

        const double after_alt = run.trace.back();
        if (std::fabs(before_alt - after_alt) <= run.tol * std::max(before_alt, 1e-30)) break;
    }
    return bank;
}

/// Noisy-data objective: inputs are J noisy truncated scans per reference
/// image, targets are the references, residuals restricted to the ROI.
inline AfbpTrainingSet build_quality_training_set(const std::vector<Image>& refs,
                                                  const RoiSpec& roi, const ScanGeometry& geom,
                                                  const ScanProtocol& protocol,
                                                  int noise_instances, const Rng& rng,
                                                  bool completed_input = false) {
    if (refs.empty()) throw config_error("build_quality_training_set: empty corpus");
    if (noise_instances < 1) throw config_error("build_quality_training_set: need J >= 1");
    roi.check_against(geom);
    RadonOperator op(geom);
    const BinRange band = measured_band(roi, geom);

    AfbpTrainingSet set;
    set.mask = roi_pixel_mask(roi, geom);
    for (size_t f = 0; f < refs.size(); ++f) {
        const Sinogram clean = op.project(refs[f]);
        Image target = refs[f];
        for (size_t p = 0; p < target.v.size(); ++p) target.v[p] *= set.mask.v[p];
        for (int j = 0; j < noise_instances; ++j) {
            Sinogram noisy = simulate_noisy_sinogram(clean, protocol,
                                                     rng.stream(f * 0x10001ULL + uint64_t(j)));
            Sinogram trunc = truncate_projections(noisy, roi);
            set.inputs.push_back(completed_input ? complete_sinogram(trunc, band) : trunc);
            set.targets.push_back(target);
        }
    }
    return set;
}

/// Noiseless Gaussian-target objective: inputs are truncated clean scans,
/// targets are ROI-masked G_sigma-blurred references.
inline AfbpTrainingSet build_blur_training_set(const std::vector<Image>& refs, double sigma,
                                               const RoiSpec& roi, const ScanGeometry& geom,
                                               bool completed_input = false);

inline KernelBank train_afbp_quality(const std::vector<Image>& refs, const RoiSpec& roi,
                                     const ScanGeometry& geom, const ScanProtocol& protocol,
                                     int noise_instances, const Rng& rng, KernelBank init,
                                     TrainingRun& run) {
    run.objective_tag = "quality";
    AfbpTrainingSet set = build_quality_training_set(refs, roi, geom, protocol, noise_instances,
                                                     rng, init.completed_input);
    KernelBank bank = train_afbp(set, std::move(init), run);
    bank.tag = "afbp(quality,d=" + std::to_string(bank.d) + ")";
    return bank;
}

/// Normalized 1-D Gaussian taps truncated at radius ceil(4 sigma);
/// sigma = 0 degenerates to a delta.
inline std::vector<double> gaussian_taps(double sigma) {
    if (!(sigma >= 0.0)) throw config_error("gaussian_taps: sigma must be nonnegative");
    if (sigma == 0.0) return {1.0};
    const int h = int(std::ceil(4.0 * sigma));
    std::vector<double> taps(size_t(2 * h) + 1);
    double sum = 0.0;
    for (int d = -h; d <= h; ++d) {
        taps[size_t(d + h)] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += taps[size_t(d + h)];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

/// Rotationally symmetric 2-D Gaussian kernel (separable product of the 1-D
/// taps); sums to 1 exactly by construction.
struct Kernel2D {
    int size = 1;
    std::vector<double> v;
};

inline Kernel2D gaussian_kernel(double sigma) {
    const auto taps = gaussian_taps(sigma);
    Kernel2D k;
    k.size = int(taps.size());
    k.v.resize(taps.size() * taps.size());
    for (size_t y = 0; y < taps.size(); ++y)
        for (size_t x = 0; x < taps.size(); ++x) k.v[y * taps.size() + x] = taps[y] * taps[x];
    return k;
}

/// Separable zero-padded Gaussian blur.
inline Image gaussian_blur(const Image& f, double sigma) {
    const auto taps = gaussian_taps(sigma);
    const int h = int(taps.size()) / 2;
    if (h == 0) return f;
    Image tmp(f.size), out(f.size);
    par::parallel_for(f.size, [&](int64_t ylo, int64_t yhi) {
        for (int64_t y = ylo; y < yhi; ++y)
            for (int x = 0; x < f.size; ++x) {
                double acc = 0.0;
                for (int d = -h; d <= h; ++d) {
                    const int sx = x - d;
                    if (sx >= 0 && sx < f.size) acc += taps[size_t(d + h)] * f.at(int(y), sx);
                }
                tmp.at(int(y), x) = acc;
            }
    });
    par::parallel_for(f.size, [&](int64_t ylo, int64_t yhi) {
        for (int64_t y = ylo; y < yhi; ++y)
            for (int x = 0; x < f.size; ++x) {
                double acc = 0.0;
                for (int d = -h; d <= h; ++d) {
                    const int sy = int(y) - d;
                    if (sy >= 0 && sy < f.size) acc += taps[size_t(d + h)] * tmp.at(sy, x);
                }
                out.at(int(y), x) = acc;
            }
    });
    return out;
}

inline AfbpTrainingSet build_blur_training_set(const std::vector<Image>& refs, double sigma,
                                               const RoiSpec& roi, const ScanGeometry& geom,
                                               bool completed_input) {
    if (refs.empty()) throw config_error("build_blur_training_set: empty corpus");
    if (!(sigma >= 0.0)) throw config_error("build_blur_training_set: sigma must be nonnegative");
    roi.check_against(geom);
    RadonOperator op(geom);
    const BinRange band = measured_band(roi, geom);

    AfbpTrainingSet set;
    set.mask = roi_pixel_mask(roi, geom);
    for (const Image& f : refs) {
        Sinogram trunc = truncate_projections(op.project(f), roi);
        set.inputs.push_back(completed_input ? complete_sinogram(trunc, band) : trunc);
        Image target = gaussian_blur(f, sigma);
        for (size_t p = 0; p < target.v.size(); ++p) target.v[p] *= set.mask.v[p];
        set.targets.push_back(std::move(target));
    }
    return set;
}

inline KernelBank train_afbp_blur(const std::vector<Image>& refs, double sigma,
                                  const RoiSpec& roi, const ScanGeometry& geom, KernelBank init,
                                  TrainingRun& run) {
    run.objective_tag = "blur(" + std::to_string(sigma) + ")";
    AfbpTrainingSet set = build_blur_training_set(refs, sigma, roi, geom, init.completed_input);
    KernelBank bank = train_afbp(set, std::move(init), run);
    bank.tag = "afbp(blur=" + std::to_string(sigma) + ",d=" + std::to_string(bank.d) + ")";
    return bank;
}

struct BlurMeasureConfig {
    double sigma_lo = 0.05;
    double sigma_hi = 5.0;
    double coarse_step = 0.25;
    double refine_tol = 1e-3;
};

/// Standard deviation of the Gaussian whose action best matches the given
/// transform outputs: argmin over sigma of the mean L2 distance between
/// transformed[j] and G_sigma * refs[j] (optionally restricted to a mask).
/// Coarse grid scan followed by golden-section refinement of the bracket.
inline double blur_measure(const std::vector<Image>& transformed, const std::vector<Image>& refs,
                           const Image* mask = nullptr, const BlurMeasureConfig& cfg = {}) {
    if (transformed.empty() || transformed.size() != refs.size())
        throw config_error("blur_measure: need matching nonempty output/reference lists");

    auto distance = [&](double sigma) {
        double mean = 0.0;
        for (size_t j = 0; j < refs.size(); ++j) {
            Image blurred = gaussian_blur(refs[j], sigma);
            double acc = 0.0;
            for (size_t p = 0; p < blurred.v.size(); ++p) {
                const double d = transformed[j].v[p] - blurred.v[p];
                acc += (mask ? mask->v[p] : 1.0) * d * d;
            }
            mean += std::sqrt(acc);
        }
        return mean / double(refs.size());
    };

    double best_sigma = cfg.sigma_lo;
    double best_val = distance(best_sigma);
    for (double s = cfg.sigma_lo + cfg.coarse_step; s <= cfg.sigma_hi + 1e-12;
         s += cfg.coarse_step) {
        const double v = distance(s);
        if (v < best_val) {
            best_val = v;
            best_sigma = s;
        }
    }
    const double lo = std::max(cfg.sigma_lo, best_sigma - cfg.coarse_step);
    const double hi = std::min(cfg.sigma_hi, best_sigma + cfg.coarse_step);
    return golden_section_minimize(distance, lo, hi, cfg.refine_tol);
}

}  // namespace ctfusion
