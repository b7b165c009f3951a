// Discrete 2-D Radon transform and its exact adjoint (back-projection),
// pixel-driven: each pixel deposits its value into the one or two nearest
// bins of every projection, and the adjoint gathers with the same weights.
#pragma once

#include <cmath>
#include <vector>

#include "ctfusion/core.hpp"
#include "ctfusion/parallel.hpp"

namespace ctfusion {

enum class Interp { nearest, linear };

class RadonOperator {
  public:
    explicit RadonOperator(const ScanGeometry& g, Interp mode = Interp::linear)
        : geom_(g), mode_(mode), cos_(g.n_angles), sin_(g.n_angles) {
        for (int k = 0; k < g.n_angles; ++k) {
            double th = g.angle(k);
            cos_[k] = std::cos(th);
            sin_[k] = std::sin(th);
        }
    }

    const ScanGeometry& geometry() const { return geom_; }
    Interp interpolation() const { return mode_; }

    /// Line integrals of f. Deposits are scaled by pitch^2 / bin_pitch so
    /// values approximate the continuous integral along each line.
    Sinogram project(const Image& f) const {
        if (f.size != geom_.image_size) throw shape_error("project: image size mismatch");
        Sinogram g(geom_);
        const int n = geom_.image_size;
        const double c = geom_.center();
        const double pitch = geom_.bin_pitch();
        const double alpha = 1.0 / pitch;
        const double R = geom_.support_radius;
        par::parallel_for(geom_.n_angles, [&](int64_t klo, int64_t khi) {
            for (int64_t k = klo; k < khi; ++k) {
                double* row = &g.v[size_t(k) * geom_.n_bins];
                const double ck = cos_[k], sk = sin_[k];
                for (int iy = 0; iy < n; ++iy) {
                    const double y = iy - c;
                    const double base = y * sk;
                    for (int ix = 0; ix < n; ++ix) {
                        const double fv = f.v[size_t(iy) * n + ix];
                        if (fv == 0.0) continue;
                        const double s = (ix - c) * ck + base;
                        const double t = (s + R) * alpha;
                        if (mode_ == Interp::linear) {
                            const int j0 = int(std::floor(t));
                            const double w1 = t - j0;
                            if (j0 >= 0 && j0 < geom_.n_bins) row[j0] += fv * (1.0 - w1) * alpha;
                            if (j0 + 1 >= 0 && j0 + 1 < geom_.n_bins) row[j0 + 1] += fv * w1 * alpha;
                        } else {
                            const int j = int(std::floor(t + 0.5));
                            if (j >= 0 && j < geom_.n_bins) row[j] += fv * alpha;
                        }
                    }
                }
            }
        });
        return g;
    }

    /// Exact transpose of project under the standard inner products.
    Image backproject(const Sinogram& g) const {
        if (!g.geom.same_grid(geom_)) throw shape_error("backproject: geometry mismatch");
        Image f(geom_.image_size);
        const int n = geom_.image_size;
        const double c = geom_.center();
        const double pitch = geom_.bin_pitch();
        const double alpha = 1.0 / pitch;
        const double R = geom_.support_radius;
        par::parallel_for(n, [&](int64_t ylo, int64_t yhi) {
            for (int64_t iy = ylo; iy < yhi; ++iy) {
                const double y = iy - c;
                for (int ix = 0; ix < n; ++ix) {
                    const double x = ix - c;
                    double acc = 0.0;
                    for (int k = 0; k < geom_.n_angles; ++k) {
                        const double s = x * cos_[k] + y * sin_[k];
                        const double t = (s + R) * alpha;
                        const double* row = &g.v[size_t(k) * geom_.n_bins];
                        if (mode_ == Interp::linear) {
                            const int j0 = int(std::floor(t));
                            const double w1 = t - j0;
                            if (j0 >= 0 && j0 < geom_.n_bins) acc += row[j0] * (1.0 - w1);
                            if (j0 + 1 >= 0 && j0 + 1 < geom_.n_bins) acc += row[j0 + 1] * w1;
                        } else {
                            const int j = int(std::floor(t + 0.5));
                            if (j >= 0 && j < geom_.n_bins) acc += row[j];
                        }
                    }
                    f.v[size_t(iy) * n + ix] = acc * alpha;
                }
            }
        });
        return f;
    }

  private:
    ScanGeometry geom_;
    Interp mode_;
    std::vector<double> cos_, sin_;
};

inline Sinogram project(const Image& f, const RadonOperator& op) { return op.project(f); }
inline Image backproject(const Sinogram& g, const RadonOperator& op) { return op.backproject(g); }

}  // namespace ctfusion
