// Filtered back-projection: ramp filter |w| with optional Butterworth
// apodization, applied per projection in the frequency domain with
// zero-padding, followed by the adjoint Radon transform.
#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <ostream>
#include <vector>

#include "ctfusion/core.hpp"
#include "ctfusion/parallel.hpp"
#include "ctfusion/radon.hpp"

namespace ctfusion {

/// 1-D projection filter described by its continuous frequency response;
/// discrete grids sample response(|freq|) in cycles per pixel unit.
struct ProjectionFilter1D {
    enum class Kind { ramlak, apodized };
    Kind kind = Kind::ramlak;
    double p = 0.0;  // Butterworth steepness
    double q = 0.0;  // cutoff as a fraction of the bin Nyquist frequency
    double bin_pitch = 1.0;
    int n_bins = 0;

    double nyquist() const { return 0.5 / bin_pitch; }

    double response(double abs_freq) const {
        double r = abs_freq;  // Ram-Lak ramp
        if (kind == Kind::apodized) {
            const double cutoff = q * nyquist();
            r /= 1.0 + std::pow(abs_freq / cutoff, 2.0 * p);
        }
        return r;
    }

    std::string tag() const {
        if (kind == Kind::ramlak) return "ram-lak";
        return "apodized(p=" + std::to_string(p) + ",q=" + std::to_string(q) + ")";
    }

    /// Response sampled on the n_bins DFT grid (for export/inspection).
    std::vector<double> grid_response() const {
        std::vector<double> r(static_cast<size_t>(n_bins));
        for (int m = 0; m < n_bins; ++m) {
            int ms = m <= n_bins / 2 ? m : m - n_bins;
            r[size_t(m)] = response(std::fabs(ms / (n_bins * bin_pitch)));
        }
        return r;
    }
};

inline ProjectionFilter1D ramlak_filter(const ScanGeometry& g) {
    ProjectionFilter1D f;
    f.kind = ProjectionFilter1D::Kind::ramlak;
    f.bin_pitch = g.bin_pitch();
    f.n_bins = g.n_bins;
    return f;
}

/// Multiplies the base response by H(w) = 1 / (1 + (|w|/w_c)^(2p)) with
/// w_c = q * Nyquist. H(0) = 1 and H(w_c) = 1/2.
inline ProjectionFilter1D butterworth_apodize(const ProjectionFilter1D& base, double p, double q) {
    if (!(p > 0.0) || !(q > 0.0)) throw config_error("butterworth_apodize: need p > 0, q > 0");
    ProjectionFilter1D f = base;
    f.kind = ProjectionFilter1D::Kind::apodized;
    f.p = p;
    f.q = q;
    return f;
}

/// Apodization parameters (p, q_i); q_i strictly monotone along the list.
struct CutoffSchedule {
    struct Entry {
        double p, q;
    };
    std::vector<Entry> entries;

    CutoffSchedule() = default;
    explicit CutoffSchedule(std::vector<Entry> e) : entries(std::move(e)) {
        if (entries.size() < 2) return;
        const bool dec = entries[1].q < entries[0].q;
        for (size_t i = 1; i < entries.size(); ++i) {
            double prev = entries[i - 1].q, cur = entries[i].q;
            if (dec ? cur >= prev : cur <= prev)
                throw config_error("CutoffSchedule: q_i must be strictly monotone");
        }
    }

    /// q_count cutoffs from q_hi down to q_lo (blur grows along the list).
    static CutoffSchedule decreasing(double p, double q_hi, double q_lo, int count) {
        std::vector<Entry> e;
        for (int i = 0; i < count; ++i) {
            double t = count > 1 ? double(i) / (count - 1) : 0.0;
            e.push_back({p, q_hi * std::pow(q_lo / q_hi, t)});
        }
        return CutoffSchedule(std::move(e));
    }
};

namespace detail {

inline int padded_length(int n_bins) {
    int p = 1;
    while (p < 2 * n_bins) p <<= 1;
    return p;
}

}  // namespace detail

/// Per-projection frequency filtering with zero-padding to twice the next
/// power of two (suppresses circular-convolution wrap).
inline Sinogram filter_sinogram(const Sinogram& g, const ProjectionFilter1D& filter) {
    const int nb = g.n_bins;
    const int P = detail::padded_length(nb);
    std::vector<double> resp(static_cast<size_t>(P));
    for (int m = 0; m < P; ++m) {
        int ms = m <= P / 2 ? m : m - P;
        resp[size_t(m)] = filter.response(std::fabs(ms / (P * filter.bin_pitch)));
    }
    Sinogram out(g.geom);
    par::parallel_for(g.n_angles, [&](int64_t klo, int64_t khi) {
        Eigen::FFT<double> fft;
        std::vector<std::complex<double>> time(static_cast<size_t>(P));
        std::vector<std::complex<double>> freq(static_cast<size_t>(P));
        for (int64_t k = klo; k < khi; ++k) {
            for (int j = 0; j < P; ++j)
                time[size_t(j)] = j < nb ? std::complex<double>(g.at(int(k), j), 0.0) : 0.0;
            fft.fwd(freq, time);
            for (int m = 0; m < P; ++m) freq[size_t(m)] *= resp[size_t(m)];
            fft.inv(time, freq);
            for (int j = 0; j < nb; ++j) out.at(int(k), j) = time[size_t(j)].real();
        }
    });
    return out;
}

/// Spatial taps of the padded frequency filter: taps[d] for offsets |d| up
/// to half_width. Filtering a projection equals convolving with the
/// symmetric kernel taps[|d|].
inline std::vector<double> filter_impulse_taps(const ProjectionFilter1D& filter, int half_width) {
    const int P = detail::padded_length(filter.n_bins);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq(static_cast<size_t>(P));
    std::vector<std::complex<double>> time(static_cast<size_t>(P));
    for (int m = 0; m < P; ++m) {
        int ms = m <= P / 2 ? m : m - P;
        freq[size_t(m)] = filter.response(std::fabs(ms / (P * filter.bin_pitch)));
    }
    fft.inv(time, freq);
    std::vector<double> taps(size_t(half_width) + 1);
    for (int d = 0; d <= half_width; ++d) taps[size_t(d)] = time[size_t(d)].real();
    return taps;
}

/// FBP with the stated angular quadrature: pi/n_angles times bin pitch,
/// times the disk-calibrated residual constant stored in the geometry.
inline Image fbp_reconstruct(const Sinogram& g, const ProjectionFilter1D& filter,
                             const RadonOperator& op) {
    if (!g.geom.same_grid(op.geometry())) throw shape_error("fbp_reconstruct: geometry mismatch");
    Image f = op.backproject(filter_sinogram(g, filter));
    const double scale =
        op.geometry().fbp_norm * M_PI / op.geometry().n_angles * op.geometry().bin_pitch();
    for (auto& x : f.v) x *= scale;
    return f;
}

/// Residual FBP normalization, fixed once per geometry by reconstructing an
/// analytic centered disk noiselessly and matching its interior mean.
inline ScanGeometry calibrate_fbp_norm(ScanGeometry g) {
    g.fbp_norm = 1.0;
    RadonOperator op(g);
    const double radius = 0.6 * g.support_radius;
    Image disk = disk_mask(radius, g);
    Image rec = fbp_reconstruct(op.project(disk), ramlak_filter(g), op);
    Image interior = disk_mask(0.7 * radius, g);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < rec.v.size(); ++i) {
        num += disk.v[i] * interior.v[i];
        den += rec.v[i] * interior.v[i];
    }
    if (!(den > 0.0)) throw degenerate_error("calibrate_fbp_norm: degenerate reconstruction");
    g.fbp_norm = num / den;
    return g;
}

/// FBP estimates for every (p, q_i) in the schedule; blur grows along the
/// returned list when the schedule's cutoffs shrink.
inline std::vector<Image> fbp_sequence(const Sinogram& g, const CutoffSchedule& schedule,
                                       const RadonOperator& op) {
    std::vector<Image> out;
    out.reserve(schedule.entries.size());
    ProjectionFilter1D base = ramlak_filter(op.geometry());
    for (const auto& e : schedule.entries)
        out.push_back(fbp_reconstruct(g, butterworth_apodize(base, e.p, e.q), op));
    return out;
}

/// Inclusive bin index range, symmetric about the central bin.
struct BinRange {
    int lo = 0;
    int hi = -1;
    bool empty() const { return hi < lo; }
    bool contains(int j) const { return j >= lo && j <= hi; }
};

/// Bins whose |s| lies within the measurement radius.
inline BinRange measured_band(const RoiSpec& roi, const ScanGeometry& g) {
    BinRange b{g.n_bins, -1};
    for (int j = 0; j < g.n_bins; ++j)
        if (std::fabs(g.bin_s(j)) <= roi.measurement_radius + 1e-12) {
            b.lo = std::min(b.lo, j);
            b.hi = std::max(b.hi, j);
        }
    return b;
}

/// Replicates each projection's band-edge values outward; bins inside the
/// band are unchanged. Idempotent.
inline Sinogram complete_sinogram(const Sinogram& g, const BinRange& band) {
    if (band.empty()) throw degenerate_error("complete_sinogram: empty band");
    if (band.lo < 0 || band.hi >= g.n_bins || band.lo + band.hi != g.n_bins - 1)
        throw config_error("complete_sinogram: band must be centered in the bin grid");
    Sinogram out = g;
    for (int k = 0; k < g.n_angles; ++k) {
        const double left = g.at(k, band.lo), right = g.at(k, band.hi);
        for (int j = 0; j < band.lo; ++j) out.at(k, j) = left;
        for (int j = band.hi + 1; j < g.n_bins; ++j) out.at(k, j) = right;
    }
    return out;
}

/// CSV rows "frequency,gain" on the n_bins grid.
inline void write_filter_csv(std::ostream& os, const ProjectionFilter1D& filter) {
    os << "frequency,gain\n";
    os.precision(17);
    auto r = filter.grid_response();
    for (int m = 0; m < filter.n_bins; ++m) {
        int ms = m <= filter.n_bins / 2 ? m : m - filter.n_bins;
        os << ms / (filter.n_bins * filter.bin_pitch) << ',' << r[size_t(m)] << '\n';
    }
}

}  // namespace ctfusion
