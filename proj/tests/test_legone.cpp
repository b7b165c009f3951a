#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "ctfusion/eval.hpp"
#include "ctfusion/legone.hpp"
#include "helpers.hpp"

using namespace ctfusion;

namespace {

Image single_pixel(double v) {
    ScanGeometry g(1, 2, 2, 1.0);
    (void)g;
    Image f(2);
    f.v.assign(4, v);
    return f;
}

}  // namespace

TEST_CASE("stochastic bounds follow the power law in the variance", "[legone]") {
    VarianceMaps maps;
    maps.instances = 2;
    Image lam(2);
    lam.v = {9.0, 4.0, 0.25, -1.0};  // negative variance must clamp to zero
    maps.maps = {lam};

    SECTION("kappa scales and q exponentiates the standard deviation") {
        auto b1 = stochastic_bounds(maps, ConfidenceParams{2.0, 1.0});
        CHECK(b1[0].v[0] == Catch::Approx(6.0));   // 2 * sqrt(9)
        CHECK(b1[0].v[1] == Catch::Approx(4.0));   // 2 * sqrt(4)
        CHECK(b1[0].v[2] == Catch::Approx(1.0));   // 2 * sqrt(0.25)
        CHECK(b1[0].v[3] == 0.0);                  // clamped

        auto b2 = stochastic_bounds(maps, ConfidenceParams{0.5, 2.0});
        CHECK(b2[0].v[0] == Catch::Approx(4.5));  // 0.5 * 9
        CHECK(b2[0].v[1] == Catch::Approx(2.0));  // 0.5 * 4
    }

    SECTION("parameters must be positive") {
        CHECK_THROWS_AS(stochastic_bounds(maps, ConfidenceParams{0.0, 1.0}), config_error);
        CHECK_THROWS_AS(stochastic_bounds(maps, ConfidenceParams{1.0, -1.0}), config_error);
    }
}

TEST_CASE("interval fusion keeps the longest consistent prefix", "[legone]") {
    SECTION("hand-worked four-estimate stack") {
        // Estimates 10, 8, 7, 3 with half-widths 2*rho = 8, 4, 2, 1 give
        // intervals [2,18], [4,12], [5,9], [2,4]; the running intersection
        // survives through the third and dies at the fourth.
        std::vector<Image> est{single_pixel(10.0), single_pixel(8.0), single_pixel(7.0),
                               single_pixel(3.0)};
        std::vector<Image> rho{single_pixel(4.0), single_pixel(2.0), single_pixel(1.0),
                               single_pixel(0.5)};
        auto [fused, sw] = legone_fuse(est, rho);
        CHECK(fused.v[0] == 7.0);
        CHECK(sw.indices.v[0] == 3.0);  // 1-based
    }

    SECTION("the first estimate is always accepted") {
        std::vector<Image> est{single_pixel(0.0), single_pixel(100.0)};
        std::vector<Image> rho{single_pixel(1.0), single_pixel(1.0)};
        auto [fused, sw] = legone_fuse(est, rho);
        CHECK(fused.v[0] == 0.0);
        CHECK(sw.indices.v[0] == 1.0);
    }

    SECTION("zero bounds advance only while the estimates agree exactly") {
        std::vector<Image> est{single_pixel(5.0), single_pixel(5.0), single_pixel(5.0001)};
        std::vector<Image> rho{single_pixel(0.0), single_pixel(0.0), single_pixel(0.0)};
        auto [fused, sw] = legone_fuse(est, rho);
        CHECK(fused.v[0] == 5.0);
        CHECK(sw.indices.v[0] == 2.0);
    }

    SECTION("output copies the chosen estimate exactly, per pixel") {
        const int n = 16;
        std::vector<Image> est, rho;
        for (uint64_t i = 0; i < 5; ++i) {
            est.push_back(testutil::random_image(n, Rng(10 + i), -1.0, 1.0));
            rho.push_back(testutil::random_image(n, Rng(20 + i), 0.0, 0.3));
        }
        auto [fused, sw] = legone_fuse(est, rho);
        for (size_t p = 0; p < fused.v.size(); ++p) {
            const int idx = int(sw.indices.v[p]);
            REQUIRE(idx >= 1);
            REQUIRE(idx <= 5);
            CHECK(fused.v[p] == est[size_t(idx - 1)].v[p]);
        }

        // Brute-force prefix intersection oracle.
        for (size_t p = 0; p < fused.v.size(); ++p) {
            int expect = 1;
            for (int i = 2; i <= 5; ++i) {
                double lo = -1e300, hi = 1e300;
                for (int k = 0; k < i; ++k) {
                    lo = std::max(lo, est[size_t(k)].v[p] - 2.0 * rho[size_t(k)].v[p]);
                    hi = std::min(hi, est[size_t(k)].v[p] + 2.0 * rho[size_t(k)].v[p]);
                }
                if (lo > hi) break;
                expect = i;
            }
            CHECK(int(sw.indices.v[p]) == expect);
        }
    }

    SECTION("shape mismatches are rejected") {
        CHECK_THROWS_AS(legone_fuse({}, {}), config_error);
        std::vector<Image> est{single_pixel(1.0)};
        CHECK_THROWS_AS(legone_fuse(est, {}), shape_error);
        std::vector<Image> rho{Image(3)};
        CHECK_THROWS_AS(legone_fuse(est, rho), shape_error);
    }
}

TEST_CASE("1-d adaptive window denoiser", "[legone]") {
    const int n = 2048;
    const double sigma = 0.4;
    // Piecewise-constant truth with one jump in the middle.
    std::vector<double> truth(n, 1.0);
    for (int i = n / 2; i < n; ++i) truth[size_t(i)] = 3.0;
    std::vector<double> noisy(n);
    Rng rng(13);
    for (int i = 0; i < n; ++i) noisy[size_t(i)] = truth[size_t(i)] + sigma * rng.next_normal();

    const std::vector<int> radii{1, 2, 4, 8, 16, 32, 64};
    Denoise1dResult res = legone_denoise_1d(noisy, radii, sigma);

    SECTION("denoising shrinks the error") {
        double mse_in = 0.0, mse_out = 0.0;
        for (int i = 0; i < n; ++i) {
            mse_in += (noisy[size_t(i)] - truth[size_t(i)]) * (noisy[size_t(i)] - truth[size_t(i)]);
            mse_out +=
                (res.output[size_t(i)] - truth[size_t(i)]) * (res.output[size_t(i)] - truth[size_t(i)]);
        }
        CHECK(mse_out < 0.2 * mse_in);
    }

    SECTION("windows stay small near the jump and grow in flat regions") {
        // Just off the discontinuity the wide windows mix the two levels and
        // the intersection dies before the widest radius. (At the exact jump
        // the mixture is balanced at every scale, so no claim is made there.)
        for (int d = 5; d <= 12; ++d) {
            CHECK(res.switch_index[size_t(n / 2 - d)] < int(radii.size()));
            CHECK(res.switch_index[size_t(n / 2 + d - 1)] < int(radii.size()));
        }
        // Deep inside a flat region most pixels accept the widest window.
        int wide = 0;
        for (int i = 200; i < 800; ++i) wide += (res.switch_index[size_t(i)] == int(radii.size()));
        CHECK(wide > 300);

        double near_mean = 0.0, flat_mean = 0.0;
        for (int d = 5; d <= 12; ++d) near_mean += res.switch_index[size_t(n / 2 - d)] / 8.0;
        for (int i = 200; i < 800; ++i) flat_mean += res.switch_index[size_t(i)] / 600.0;
        CHECK(near_mean < flat_mean);
    }

    SECTION("error is bounded by six half-widths at the chosen window") {
        int covered = 0;
        for (int i = 0; i < n; ++i) {
            const int r = radii[size_t(res.switch_index[size_t(i)] - 1)];
            const int a = std::max(0, i - r), b = std::min(n - 1, i + r);
            const double rho = 2.0 * sigma / std::sqrt(double(b - a + 1));
            covered += std::fabs(res.output[size_t(i)] - truth[size_t(i)]) <= 6.0 * rho;
        }
        CHECK(double(covered) / n >= 0.95);
    }

    SECTION("input validation") {
        CHECK_THROWS_AS(legone_denoise_1d({}, radii, sigma), config_error);
        CHECK_THROWS_AS(legone_denoise_1d(noisy, {}, sigma), config_error);
        CHECK_THROWS_AS(legone_denoise_1d(noisy, {4, 2}, sigma), config_error);
        CHECK_THROWS_AS(legone_denoise_1d(noisy, radii, -1.0), config_error);
    }
}

TEST_CASE("confidence calibration picks the best grid member", "[legone]") {
    // Small geometry keeps the full pipeline cheap.
    ScanGeometry geom = calibrate_fbp_norm(ScanGeometry(40, 41, 32, 16.0));
    RadonOperator op(geom);
    PhantomConfig pc;
    pc.image_size = 32;
    pc.min_inner = 3;
    pc.max_inner = 6;
    pc.seed = 301;
    std::vector<Image> train = make_corpus(pc, 2);
    std::vector<Sinogram> clean;
    for (const auto& f : train) clean.push_back(op.project(f));
    ScanProtocol protocol = calibrate_scale(clean, 1200.0, 60.0);

    std::vector<Reconstructor> est;
    for (double q : {0.45, 0.25, 0.14})
        est.push_back(make_fbp_reconstructor(geom, butterworth_apodize(ramlak_filter(geom), 2.0, q)));

    const Rng cal_rng = Rng(901).stream(2);
    LegoneCalibration cal = calibrate_confidence(train, est, geom, protocol, 6, cal_rng);

    SECTION("chosen parameters come from the grid and repeat deterministically") {
        ConfidenceGrid grid;
        CHECK(std::count(grid.kappas.begin(), grid.kappas.end(), cal.params.kappa_cal) == 1);
        CHECK(std::count(grid.exponents.begin(), grid.exponents.end(), cal.params.q_exp) == 1);
        CHECK(cal.maps.maps.size() == est.size());

        LegoneCalibration again = calibrate_confidence(train, est, geom, protocol, 6, cal_rng);
        CHECK(again.params.kappa_cal == cal.params.kappa_cal);
        CHECK(again.params.q_exp == cal.params.q_exp);
        CHECK(again.best_mean_snr == cal.best_mean_snr);
    }

    SECTION("no other grid member scores better on the calibration stacks") {
        // Rebuild the scoring stacks exactly as calibration does.
        std::vector<std::vector<Image>> stacks(train.size());
        for (size_t t = 0; t < train.size(); ++t) {
            Sinogram noisy =
                simulate_noisy_sinogram(op.project(train[t]), protocol, cal_rng.stream(0xC0DE + t));
            for (const auto& e : est) stacks[t].push_back(e.apply(noisy));
        }
        auto score = [&](const ConfidenceParams& params) {
            const auto bounds = stochastic_bounds(cal.maps, params);
            double mean = 0.0;
            for (size_t t = 0; t < train.size(); ++t) {
                auto [fused, sw] = legone_fuse(stacks[t], bounds);
                (void)sw;
                mean += snr_db(train[t], fused);
            }
            return mean / double(train.size());
        };

        const double best = score(cal.params);
        CHECK(best == Catch::Approx(cal.best_mean_snr).margin(1e-9));
        ConfidenceGrid grid;
        for (double q : grid.exponents)
            for (double kappa : grid.kappas)
                CHECK(score(ConfidenceParams{kappa, q}) <= best + 1e-9);
    }

    SECTION("variance maps are nonnegative and pooled across the corpus") {
        for (const auto& m : cal.maps.maps)
            for (double x : m.v) CHECK(x >= 0.0);

        std::vector<VarianceMaps> per;
        for (size_t t = 0; t < train.size(); ++t)
            per.push_back(estimate_variance_maps(train[t], est, geom, protocol, 6,
                                                 cal_rng.stream(0x5641 + t)));
        VarianceMaps pooled = average_variance_maps(per);
        for (size_t e = 0; e < pooled.maps.size(); ++e)
            CHECK(testutil::max_abs_diff(pooled.maps[e].v, cal.maps.maps[e].v) < 1e-12);
    }
}
