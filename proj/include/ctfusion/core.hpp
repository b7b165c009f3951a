// Core grid types, scan geometry and deterministic randomness shared by the
// whole toolkit.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctfusion {

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct range_error : std::out_of_range {
    using std::out_of_range::out_of_range;
};
struct degenerate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct training_error : std::runtime_error {
    training_error(const std::string& msg, std::vector<double> trace_ = {})
        : std::runtime_error(msg), trace(std::move(trace_)) {}
    std::vector<double> trace;
};

/// Parallel-beam sampling grid: evenly spaced angles over [0, pi) and signed
/// bin distances symmetric about s = 0.
struct ScanGeometry {
    int n_angles = 0;
    int n_bins = 0;
    double support_radius = 0.0;  // physical radius R of the image disk, pixel units
    int image_size = 0;           // side length n of the square pixel grid
    double fbp_norm = 1.0;        // residual FBP scale, see fbp::calibrate_fbp_norm

    ScanGeometry() = default;
    ScanGeometry(int angles, int bins, int size, double radius = 0.0)
        : n_angles(angles),
          n_bins(bins),
          support_radius(radius > 0.0 ? radius : size / 2.0),
          image_size(size) {
        if (n_angles < 1 || n_bins < 1 || image_size < 2)
            throw config_error("ScanGeometry: need n_angles>=1, n_bins>=1, image_size>=2");
        if (support_radius <= 0.0)
            throw config_error("ScanGeometry: support_radius must be positive");
    }

    double bin_pitch() const {
        return n_bins > 1 ? 2.0 * support_radius / (n_bins - 1) : 2.0 * support_radius;
    }
    double angle(int k) const {
        if (k < 0 || k >= n_angles) throw range_error("angle index out of range");
        return k * M_PI / n_angles;
    }
    double bin_s(int j) const {
        if (j < 0 || j >= n_bins) throw range_error("bin index out of range");
        return -support_radius + j * bin_pitch();
    }
    /// Image center in pixel coordinates; pixel pitch is 1.
    double center() const { return (image_size - 1) / 2.0; }

    bool same_grid(const ScanGeometry& o) const {
        return n_angles == o.n_angles && n_bins == o.n_bins && image_size == o.image_size &&
               support_radius == o.support_radius;
    }
};

/// Square attenuation map on the pixel grid, row-major.
struct Image {
    int size = 0;
    std::vector<double> v;

    Image() = default;
    explicit Image(int n, double fill = 0.0) : size(n), v(size_t(n) * n, fill) {}

    double& at(int iy, int ix) { return v[size_t(iy) * size + ix]; }
    double at(int iy, int ix) const { return v[size_t(iy) * size + ix]; }
    size_t pixels() const { return v.size(); }

    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

/// Angles x bins matrix of line integrals (or photon counts), row per angle.
struct Sinogram {
    int n_angles = 0;
    int n_bins = 0;
    std::vector<double> v;
    ScanGeometry geom;

    Sinogram() = default;
    explicit Sinogram(const ScanGeometry& g, double fill = 0.0)
        : n_angles(g.n_angles), n_bins(g.n_bins), v(size_t(g.n_angles) * g.n_bins, fill), geom(g) {}

    double& at(int k, int j) { return v[size_t(k) * n_bins + j]; }
    double at(int k, int j) const { return v[size_t(k) * n_bins + j]; }
    size_t bins() const { return v.size(); }
};

/// Centered region-of-interest disk plus the (wider) disk through which
/// projections are actually measured.
struct RoiSpec {
    double roi_radius = 0.0;
    double measurement_radius = 0.0;

    RoiSpec() = default;
    explicit RoiSpec(double r, double measured = -1.0)
        : roi_radius(r), measurement_radius(measured >= 0.0 ? measured : 1.1 * r) {
        if (!(roi_radius > 0.0) || measurement_radius < roi_radius)
            throw config_error("RoiSpec: need 0 < roi_radius <= measurement_radius");
    }

    void check_against(const ScanGeometry& g) const {
        if (measurement_radius > g.support_radius + 1e-12)
            throw config_error("RoiSpec: measurement_radius exceeds support_radius");
    }
};

namespace detail {
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based deterministic generator. Every value is a pure hash of
/// (seed, stream, counter), so parallel consumers with disjoint streams
/// produce the same numbers in any execution order.
class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : key_(detail::mix64(detail::mix64(seed) ^ 0x6a09e667f3bcc909ULL)), stream_id_(stream) {}

    /// Independent substream; identity depends only on (seed, id).
    Rng stream(uint64_t id) const {
        Rng r = *this;
        r.stream_id_ = detail::mix64(stream_id_ ^ detail::mix64(id + 0x9e3779b97f4a7c15ULL));
        r.counter_ = 0;
        return r;
    }

    uint64_t next_u64() { return detail::mix64(key_ ^ detail::mix64(stream_id_ + counter_++)); }

    /// Uniform in [0, 1).
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // Multiply-shift rejection-free mapping; bias negligible for n << 2^64.
        return uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (consumes two uniforms).
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    uint64_t derived_seed(uint64_t id) const {
        return detail::mix64(key_ ^ detail::mix64(id + 0x517cc1b727220a95ULL));
    }

  private:
    uint64_t key_ = 0;
    uint64_t stream_id_ = 0;
    uint64_t counter_ = 0;
};

/// Line parameters (theta_k, s_j) for one sinogram cell.
inline std::pair<double, double> line_coordinates(int angle_index, int bin_index,
                                                  const ScanGeometry& g) {
    return {g.angle(angle_index), g.bin_s(bin_index)};
}

/// 0/1 mask of pixels whose center lies within `radius` of the image center.
inline Image disk_mask(double radius, const ScanGeometry& g) {
    Image mask(g.image_size);
    const double c = g.center();
    const double r2 = radius * radius;
    for (int iy = 0; iy < g.image_size; ++iy)
        for (int ix = 0; ix < g.image_size; ++ix) {
            double dx = ix - c, dy = iy - c;
            mask.at(iy, ix) = (dx * dx + dy * dy <= r2) ? 1.0 : 0.0;
        }
    return mask;
}

inline Image roi_pixel_mask(const RoiSpec& roi, const ScanGeometry& g) {
    return disk_mask(roi.roi_radius, g);
}

}  // namespace ctfusion
