// Shared fixtures for the unit suite: small seeded images/sinograms and a
// scratch directory helper for IO round-trip tests.
#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ctfusion/core.hpp"

namespace testutil {

inline ctfusion::Image random_image(int size, ctfusion::Rng rng, double lo = 0.0,
                                    double hi = 1.0) {
    ctfusion::Image f(size);
    for (auto& x : f.v) x = rng.uniform(lo, hi);
    return f;
}

inline ctfusion::Sinogram random_sinogram(const ctfusion::ScanGeometry& g, ctfusion::Rng rng,
                                          double lo = 0.0, double hi = 1.0) {
    ctfusion::Sinogram s(g);
    for (auto& x : s.v) x = rng.uniform(lo, hi);
    return s;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size() && i < b.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    if (a.size() != b.size()) m = 1e300;
    return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// Unique per-process scratch directory, created on first use.
inline std::filesystem::path scratch_dir() {
    static std::filesystem::path dir = [] {
        auto d = std::filesystem::temp_directory_path() /
                 ("ctfusion_tests_" + std::to_string(::getpid()));
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

inline std::string scratch_file(const std::string& name) {
    return (scratch_dir() / name).string();
}

}  // namespace testutil
