// Random geometric ellipse phantoms: one boundary ellipse on a constant
// background filled with smaller ellipses, values drawn from a small set of
// intensity levels. Later ellipses overwrite earlier ones.
#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "ctfusion/core.hpp"

namespace ctfusion {

struct EllipseSpec {
    double cx = 0.0, cy = 0.0;  // center offset from image center, pixels
    double a = 1.0, b = 1.0;    // semi-axes, pixels
    double angle = 0.0;         // rotation, radians
    double value = 0.0;         // intensity written inside

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double u = (dx * ca + dy * sa) / a;
        const double w = (-dx * sa + dy * ca) / b;
        return u * u + w * w <= 1.0;
    }
};

struct PhantomConfig {
    int image_size = 64;
    int min_inner = 8;
    int max_inner = 20;
    int intensity_levels = 4;
    double boundary_thickness = 2.0;  // outer ellipse ring, pixels
    uint64_t seed = 0;

    void validate() const {
        if (image_size < 2) throw config_error("PhantomConfig: image_size >= 2");
        if (intensity_levels < 2) throw config_error("PhantomConfig: need >= 2 intensity levels");
        if (min_inner < 0 || max_inner < min_inner)
            throw config_error("PhantomConfig: empty inner-ellipse count range");
    }
};

/// Binary per-pixel-center rasterization; piecewise-constant ground truth.
inline Image rasterize_ellipses(const std::vector<EllipseSpec>& specs, int image_size) {
    Image f(image_size);
    const double c = (image_size - 1) / 2.0;
    for (int iy = 0; iy < image_size; ++iy)
        for (int ix = 0; ix < image_size; ++ix) {
            const double x = ix - c, y = iy - c;
            double val = 0.0;
            for (const auto& e : specs)
                if (e.contains(x, y)) val = e.value;
            f.at(iy, ix) = val;
        }
    return f;
}

/// Ellipse list for one random phantom. Levels are sampled per phantom from
/// [0.2, 1.0]; background stays 0 so attenuation is nonnegative.
inline std::vector<EllipseSpec> random_phantom_specs(const PhantomConfig& cfg, Rng rng) {
    cfg.validate();
    const double n = cfg.image_size;

    std::vector<double> levels(size_t(cfg.intensity_levels));
    for (auto& l : levels) l = rng.uniform(0.2, 1.0);
    auto pick_level = [&] { return levels[size_t(rng.next_below(levels.size()))]; };

    std::vector<EllipseSpec> specs;
    // Outer ellipse: a ring at one level around an interior at another.
    const double oa = rng.uniform(0.36, 0.46) * n;
    const double ob = rng.uniform(0.36, 0.46) * n;
    const double oang = rng.uniform(0.0, M_PI);
    specs.push_back({0.0, 0.0, oa, ob, oang, pick_level()});
    const double t = cfg.boundary_thickness;
    specs.push_back({0.0, 0.0, std::max(oa - t, 1.0), std::max(ob - t, 1.0), oang, pick_level()});
    const double ia = specs.back().a, ib = specs.back().b;

    const int count =
        cfg.min_inner + int(rng.next_below(uint64_t(cfg.max_inner - cfg.min_inner + 1)));
    for (int i = 0; i < count; ++i) {
        EllipseSpec e;
        for (int attempt = 0; attempt < 64; ++attempt) {
            e.a = rng.uniform(0.03, 0.16) * n;
            e.b = rng.uniform(0.03, 0.16) * n;
            e.angle = rng.uniform(0.0, M_PI);
            const double rad = rng.uniform(0.0, 0.8);
            const double phi = rng.uniform(0.0, 2.0 * M_PI);
            e.cx = rad * ia * std::cos(phi);
            e.cy = rad * ib * std::sin(phi);
            const double reach = std::max(e.a, e.b);
            // Keep the ellipse inside the interior of the boundary ellipse.
            const double u = e.cx / std::max(ia - reach, 1e-6);
            const double w = e.cy / std::max(ib - reach, 1e-6);
            if (u * u + w * w <= 1.0 && reach < std::min(ia, ib)) break;
        }
        e.value = pick_level();
        specs.push_back(e);
    }
    return specs;
}

inline Image random_phantom(const PhantomConfig& cfg, const Rng& rng) {
    return rasterize_ellipses(random_phantom_specs(cfg, rng), cfg.image_size);
}

struct PerturbResult {
    std::vector<EllipseSpec> specs;
    bool clipped = false;  // some ellipse had to be pulled back into the disk
};

/// Multiplicative jitter of centers and semi-axes by +-amplitude of their own
/// magnitude. Ellipses pushed outside the support disk are clipped back.
inline PerturbResult perturb_specs(const std::vector<EllipseSpec>& base, double amplitude,
                                   Rng rng, double support_radius) {
    if (amplitude < 0.0 || amplitude >= 1.0)
        throw config_error("perturb_specs: amplitude must be in [0, 1)");
    PerturbResult out;
    out.specs = base;
    for (auto& e : out.specs) {
        e.cx *= 1.0 + rng.uniform(-amplitude, amplitude);
        e.cy *= 1.0 + rng.uniform(-amplitude, amplitude);
        e.a *= 1.0 + rng.uniform(-amplitude, amplitude);
        e.b *= 1.0 + rng.uniform(-amplitude, amplitude);
        const double reach = std::hypot(e.cx, e.cy) + std::max(e.a, e.b);
        if (reach > support_radius) {
            const double pull = support_radius / reach;
            e.cx *= pull;
            e.cy *= pull;
            e.a *= pull;
            e.b *= pull;
            out.clipped = true;
        }
    }
    return out;
}

inline Image perturb_phantom(const std::vector<EllipseSpec>& base, double amplitude,
                             const Rng& rng, int image_size) {
    return rasterize_ellipses(perturb_specs(base, amplitude, rng, image_size / 2.0).specs,
                              image_size);
}

/// n phantoms with per-item derived seeds from cfg.seed.
inline std::vector<Image> make_corpus(const PhantomConfig& cfg, int n) {
    if (n < 1) throw config_error("make_corpus: n >= 1");
    std::vector<Image> corpus;
    corpus.reserve(size_t(n));
    Rng root(cfg.seed);
    for (int i = 0; i < n; ++i) corpus.push_back(random_phantom(cfg, root.stream(uint64_t(i))));
    return corpus;
}

// Plain text table, one ellipse per line: cx cy a b angle value.
inline void write_ellipse_table(std::ostream& os, const std::vector<EllipseSpec>& specs) {
    os.precision(17);
    for (const auto& e : specs)
        os << e.cx << ' ' << e.cy << ' ' << e.a << ' ' << e.b << ' ' << e.angle << ' ' << e.value
           << '\n';
}

inline std::vector<EllipseSpec> read_ellipse_table(std::istream& is) {
    std::vector<EllipseSpec> specs;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        EllipseSpec e;
        if (!(ss >> e.cx >> e.cy >> e.a >> e.b >> e.angle >> e.value))
            throw config_error("ellipse table: malformed line " + std::to_string(lineno));
        if (!(e.a > 0.0) || !(e.b > 0.0))
            throw config_error("ellipse table: nonpositive semi-axis on line " +
                               std::to_string(lineno));
        specs.push_back(e);
    }
    return specs;
}

}  // namespace ctfusion
