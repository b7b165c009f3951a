#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ctfusion/phantom.hpp"
#include "helpers.hpp"

using namespace ctfusion;

TEST_CASE("ellipse rasterization writes the last covering value", "[phantom]") {
    // One centered circle on a 33-grid behaves exactly like a disk mask.
    std::vector<EllipseSpec> one{{0.0, 0.0, 10.0, 10.0, 0.0, 0.7}};
    Image f = rasterize_ellipses(one, 33);
    const double c = 16.0;
    for (int iy = 0; iy < 33; ++iy)
        for (int ix = 0; ix < 33; ++ix) {
            const bool inside = std::hypot(iy - c, ix - c) <= 10.0;
            CHECK(f.at(iy, ix) == (inside ? 0.7 : 0.0));
        }

    // A later ellipse overwrites an earlier one where they overlap.
    std::vector<EllipseSpec> two{{0.0, 0.0, 10.0, 10.0, 0.0, 0.7},
                                 {0.0, 0.0, 4.0, 4.0, 0.0, 0.2}};
    Image g = rasterize_ellipses(two, 33);
    CHECK(g.at(16, 16) == 0.2);
    CHECK(g.at(16, 16 + 8) == 0.7);

    // Rotation carries the long axis with the ellipse.
    std::vector<EllipseSpec> rot{{0.0, 0.0, 12.0, 3.0, M_PI / 2.0, 1.0}};
    Image h = rasterize_ellipses(rot, 33);
    CHECK(h.at(16 + 10, 16) == 1.0);  // along y after rotating the x-axis ellipse
    CHECK(h.at(16, 16 + 10) == 0.0);
}

TEST_CASE("random phantoms have bounded nonnegative levels inside the support disk",
          "[phantom]") {
    PhantomConfig cfg;
    cfg.image_size = 64;
    cfg.seed = 11;
    Rng rng(cfg.seed);

    for (uint64_t t = 0; t < 4; ++t) {
        Image f = random_phantom(cfg, rng.stream(t));
        double vmax = 0.0;
        for (double x : f.v) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
            vmax = std::max(vmax, x);
        }
        CHECK(vmax >= 0.2);  // intensity levels are drawn from [0.2, 1.0]

        // Support stays inside the half-size disk (boundary ellipse <= 0.46 n).
        const double c = (cfg.image_size - 1) / 2.0;
        for (int iy = 0; iy < cfg.image_size; ++iy)
            for (int ix = 0; ix < cfg.image_size; ++ix)
                if (f.at(iy, ix) != 0.0)
                    CHECK(std::hypot(iy - c, ix - c) <= cfg.image_size / 2.0 + 1e-9);
    }
}

TEST_CASE("phantom generation is a pure function of the seed", "[phantom]") {
    PhantomConfig cfg;
    cfg.seed = 101;
    auto a = make_corpus(cfg, 3);
    auto b = make_corpus(cfg, 3);
    REQUIRE(a.size() == 3);
    for (size_t i = 0; i < a.size(); ++i) CHECK(testutil::max_abs_diff(a[i].v, b[i].v) == 0.0);

    // Distinct corpus members differ, and a longer corpus extends a shorter one.
    CHECK(testutil::max_abs_diff(a[0].v, a[1].v) > 0.0);
    auto longer = make_corpus(cfg, 5);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(testutil::max_abs_diff(a[i].v, longer[i].v) == 0.0);

    cfg.seed = 102;
    auto c = make_corpus(cfg, 3);
    CHECK(testutil::max_abs_diff(a[0].v, c[0].v) > 0.0);

    CHECK_THROWS_AS(make_corpus(cfg, 0), config_error);
}

TEST_CASE("phantom config validation", "[phantom]") {
    PhantomConfig bad;
    bad.image_size = 1;
    CHECK_THROWS_AS(bad.validate(), config_error);

    bad = PhantomConfig{};
    bad.intensity_levels = 1;
    CHECK_THROWS_AS(bad.validate(), config_error);

    bad = PhantomConfig{};
    bad.min_inner = 10;
    bad.max_inner = 5;
    CHECK_THROWS_AS(bad.validate(), config_error);

    CHECK_NOTHROW(PhantomConfig{}.validate());
}

TEST_CASE("spec perturbation jitters shapes within the support disk", "[phantom]") {
    PhantomConfig cfg;
    cfg.seed = 40;
    auto base = random_phantom_specs(cfg, Rng(cfg.seed));

    SECTION("zero amplitude is the identity") {
        PerturbResult r = perturb_specs(base, 0.0, Rng(1), 32.0);
        CHECK_FALSE(r.clipped);
        REQUIRE(r.specs.size() == base.size());
        for (size_t i = 0; i < base.size(); ++i) {
            CHECK(r.specs[i].cx == base[i].cx);
            CHECK(r.specs[i].a == base[i].a);
            CHECK(r.specs[i].value == base[i].value);
        }
    }

    SECTION("perturbed ellipses stay inside the disk") {
        for (uint64_t s = 0; s < 5; ++s) {
            PerturbResult r = perturb_specs(base, 0.3, Rng(s), 32.0);
            for (const auto& e : r.specs)
                CHECK(std::hypot(e.cx, e.cy) + std::max(e.a, e.b) <= 32.0 + 1e-9);
        }
    }

    SECTION("same seed reproduces the same jitter") {
        PerturbResult r1 = perturb_specs(base, 0.2, Rng(9), 32.0);
        PerturbResult r2 = perturb_specs(base, 0.2, Rng(9), 32.0);
        for (size_t i = 0; i < r1.specs.size(); ++i) {
            CHECK(r1.specs[i].cx == r2.specs[i].cx);
            CHECK(r1.specs[i].b == r2.specs[i].b);
        }
        Image f1 = perturb_phantom(base, 0.2, Rng(9), 64);
        Image f2 = perturb_phantom(base, 0.2, Rng(9), 64);
        CHECK(testutil::max_abs_diff(f1.v, f2.v) == 0.0);
    }

    SECTION("amplitude outside [0, 1) is rejected") {
        CHECK_THROWS_AS(perturb_specs(base, -0.1, Rng(1), 32.0), config_error);
        CHECK_THROWS_AS(perturb_specs(base, 1.0, Rng(1), 32.0), config_error);
    }
}

TEST_CASE("ellipse tables round trip through text", "[phantom]") {
    PhantomConfig cfg;
    cfg.seed = 77;
    auto specs = random_phantom_specs(cfg, Rng(cfg.seed));

    std::ostringstream os;
    write_ellipse_table(os, specs);
    std::istringstream is(os.str());
    auto back = read_ellipse_table(is);

    REQUIRE(back.size() == specs.size());
    for (size_t i = 0; i < specs.size(); ++i) {
        CHECK(back[i].cx == specs[i].cx);
        CHECK(back[i].cy == specs[i].cy);
        CHECK(back[i].a == specs[i].a);
        CHECK(back[i].b == specs[i].b);
        CHECK(back[i].angle == specs[i].angle);
        CHECK(back[i].value == specs[i].value);
    }

    SECTION("comments and blank lines are skipped, bad rows rejected") {
        std::istringstream ok("# header\n\n1 2 3 4 0.5 0.9\n");
        auto s = read_ellipse_table(ok);
        REQUIRE(s.size() == 1);
        CHECK(s[0].value == 0.9);

        std::istringstream bad("1 2 3\n");
        CHECK_THROWS_AS(read_ellipse_table(bad), config_error);
        std::istringstream nonpos("0 0 -1 4 0 0.5\n");
        CHECK_THROWS_AS(read_ellipse_table(nonpos), config_error);
    }
}
