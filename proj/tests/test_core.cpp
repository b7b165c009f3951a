#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "ctfusion/core.hpp"
#include "helpers.hpp"

using namespace ctfusion;

TEST_CASE("scan geometry exposes the stated angle and bin grids", "[core]") {
    ScanGeometry g(90, 95, 64, 32.0);

    SECTION("angles cover [0, pi) uniformly") {
        CHECK(g.angle(0) == 0.0);
        CHECK(g.angle(45) == Catch::Approx(M_PI / 2.0).margin(1e-15));
        for (int k = 1; k < g.n_angles; ++k) {
            CHECK(g.angle(k) > g.angle(k - 1));
            CHECK(g.angle(k) < M_PI);
        }
        CHECK_THROWS_AS(g.angle(-1), range_error);
        CHECK_THROWS_AS(g.angle(90), range_error);
    }

    SECTION("bin offsets span [-R, +R] symmetrically") {
        CHECK(g.bin_s(0) == Catch::Approx(-32.0).margin(1e-12));
        CHECK(g.bin_s(94) == Catch::Approx(32.0).margin(1e-12));
        CHECK(g.bin_s(47) == Catch::Approx(0.0).margin(1e-12));  // odd bin count centers on 0
        CHECK(g.bin_pitch() == Catch::Approx(64.0 / 94.0));
        for (int j = 1; j < g.n_bins; ++j)
            CHECK(g.bin_s(j) - g.bin_s(j - 1) == Catch::Approx(g.bin_pitch()));
        CHECK_THROWS_AS(g.bin_s(95), range_error);
    }

    SECTION("pixel center and default support radius") {
        CHECK(g.center() == Catch::Approx(31.5));
        ScanGeometry d(10, 11, 64);  // radius omitted
        CHECK(d.support_radius == Catch::Approx(32.0));
    }

    SECTION("degenerate grids are rejected") {
        CHECK_THROWS_AS(ScanGeometry(0, 95, 64), config_error);
        CHECK_THROWS_AS(ScanGeometry(90, 0, 64), config_error);
        CHECK_THROWS_AS(ScanGeometry(90, 95, 1), config_error);
        // A nonpositive radius is not an error: it falls back to the same
        // half-image default as the omitted form.
        CHECK(ScanGeometry(90, 95, 64, -3.0).support_radius == Catch::Approx(32.0));
    }
}

TEST_CASE("line coordinates pair the angle grid with the offset grid", "[core]") {
    ScanGeometry g(90, 95, 64, 32.0);

    auto [mid_angle, mid_s] = line_coordinates(0, 47, g);
    CHECK(mid_angle == 0.0);
    CHECK(mid_s == Catch::Approx(0.0).margin(1e-12));

    auto [quarter_angle, quarter_s] = line_coordinates(45, 0, g);
    CHECK(quarter_angle == Catch::Approx(M_PI / 2.0));
    CHECK(quarter_s == Catch::Approx(-32.0));

    auto [last_angle, last_s] = line_coordinates(0, 94, g);
    CHECK(last_angle == 0.0);
    CHECK(last_s == Catch::Approx(32.0));
}

TEST_CASE("disk masks match a brute-force pixel census", "[core]") {
    ScanGeometry g(90, 95, 64, 32.0);

    SECTION("radius 10 on the 64-grid") {
        Image m = disk_mask(10.0, g);
        int count = 0;
        const double c = g.center();
        for (int iy = 0; iy < 64; ++iy)
            for (int ix = 0; ix < 64; ++ix) {
                const bool inside = std::hypot(iy - c, ix - c) <= 10.0;
                CHECK(m.at(iy, ix) == (inside ? 1.0 : 0.0));
                count += inside;
            }
        CHECK(count > 0);
    }

    SECTION("radius covering the diagonal marks every pixel") {
        Image m = disk_mask(64.0 * M_SQRT2 / 2.0, g);
        for (double x : m.v) CHECK(x == 1.0);
    }

    SECTION("zero radius on an odd grid keeps only the center pixel") {
        ScanGeometry odd(10, 11, 65, 32.0);
        Image m = disk_mask(0.0, odd);
        double total = 0.0;
        for (double x : m.v) total += x;
        CHECK(total == 1.0);
        CHECK(m.at(32, 32) == 1.0);
    }

    SECTION("mask grows monotonically with the radius") {
        Image prev = disk_mask(4.0, g);
        for (double r : {8.0, 12.0, 20.0, 31.0}) {
            Image cur = disk_mask(r, g);
            for (size_t i = 0; i < cur.v.size(); ++i) CHECK(cur.v[i] >= prev.v[i]);
            prev = cur;
        }
    }
}

TEST_CASE("region spec defaults the measured disk to 1.1x the target disk", "[core]") {
    RoiSpec roi(16.0);
    CHECK(roi.roi_radius == 16.0);
    CHECK(roi.measurement_radius == Catch::Approx(17.6));

    RoiSpec wide(16.0, 24.0);
    CHECK(wide.measurement_radius == 24.0);

    CHECK_THROWS_AS(RoiSpec(0.0), config_error);
    CHECK_THROWS_AS(RoiSpec(-4.0), config_error);
    CHECK_THROWS_AS(RoiSpec(16.0, 10.0), config_error);

    ScanGeometry g(90, 95, 64, 32.0);
    CHECK_NOTHROW(RoiSpec(16.0).check_against(g));
    CHECK_NOTHROW(RoiSpec(16.0, 32.0).check_against(g));
    CHECK_THROWS_AS(RoiSpec(16.0, 40.0).check_against(g), config_error);

    Image m = roi_pixel_mask(RoiSpec(10.0), g);
    Image d = disk_mask(10.0, g);
    CHECK(testutil::max_abs_diff(m.v, d.v) == 0.0);
}

TEST_CASE("counter rng reproduces streams independent of draw order", "[core]") {
    SECTION("identical seeds replay identical sequences") {
        Rng a(42, 7), b(42, 7);
        for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    }

    SECTION("distinct streams decorrelate") {
        Rng a = Rng(42).stream(1);
        Rng b = Rng(42).stream(2);
        int agree = 0;
        for (int i = 0; i < 64; ++i) agree += (a.next_u64() == b.next_u64());
        CHECK(agree == 0);
    }

    SECTION("a forked stream does not disturb the parent") {
        Rng a(9, 0);
        const uint64_t first = Rng(9, 0).next_u64();
        Rng child = a.stream(5);
        (void)child.next_u64();
        CHECK(a.next_u64() == first);
    }

    SECTION("uniform draws respect the half-open range") {
        Rng r(123);
        for (int i = 0; i < 1000; ++i) {
            const double u = r.uniform(-2.0, 3.0);
            CHECK(u >= -2.0);
            CHECK(u < 3.0);
        }
        Rng s(123);
        for (int i = 0; i < 1000; ++i) CHECK(s.next_below(17) < 17);
    }

    SECTION("normal draws have unit moments at the sampling scale") {
        Rng r(7);
        const int n = 100000;
        double mean = 0.0, m2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = r.next_normal();
            mean += x;
            m2 += x * x;
        }
        mean /= n;
        m2 = m2 / n - mean * mean;
        CHECK(std::fabs(mean) < 0.02);
        CHECK(std::fabs(m2 - 1.0) < 0.03);
    }

    SECTION("derived seeds are pure functions of (seed, id)") {
        CHECK(Rng(1).derived_seed(3) == Rng(1).derived_seed(3));
        CHECK(Rng(1).derived_seed(3) != Rng(1).derived_seed(4));
        CHECK(Rng(1).derived_seed(3) != Rng(2).derived_seed(3));
    }
}

TEST_CASE("images and sinograms use row-major addressing", "[core]") {
    Image f(4);
    f.at(1, 2) = 5.0;
    CHECK(f.v[size_t(1) * 4 + 2] == 5.0);
    CHECK(f.pixels() == 16);
    CHECK(f.finite());
    f.at(3, 3) = std::nan("");
    CHECK_FALSE(f.finite());

    ScanGeometry g(3, 5, 8, 4.0);
    Sinogram s(g, 1.5);
    CHECK(s.bins() == 15);
    for (double x : s.v) CHECK(x == 1.5);
    s.at(2, 4) = -1.0;
    CHECK(s.v[size_t(2) * 5 + 4] == -1.0);
    CHECK(s.geom.same_grid(g));
    CHECK_FALSE(g.same_grid(ScanGeometry(3, 5, 8, 5.0)));
}
