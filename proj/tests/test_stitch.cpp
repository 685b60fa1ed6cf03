#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <etch/stitch.hpp>

#include "helpers.hpp"

using namespace etch;

TEST_CASE("weight map matches the raised cosine with floor", "[stitch]") {
    WeightMap m = make_weight_map(4);
    auto h = [](int t) { return 0.5 * (1.0 - std::cos(2.0 * kPi * (t + 0.5) / 4.0)); };
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            double expect = std::max(h(x) * h(y), 1e-3);
            REQUIRE(m.at(x, y) == Catch::Approx(expect).margin(1e-12));
            // symmetric in both axes and under transposition
            REQUIRE(m.at(x, y) == Catch::Approx(m.at(3 - x, y)).margin(1e-12));
            REQUIRE(m.at(x, y) == Catch::Approx(m.at(y, x)).margin(1e-12));
        }
    }
    REQUIRE(m.at(1, 1) == Catch::Approx(0.7285533906).margin(1e-9));

    WeightMap big = make_weight_map(512);
    REQUIRE(big.at(0, 0) == 1e-3);  // raw product underflows the floor
    REQUIRE(big.at(255, 255) > 0.999);
    for (double v : big.w) {
        REQUIRE(v >= 1e-3);
        REQUIRE(v <= 1.0);
    }
    REQUIRE_THROWS_AS(make_weight_map(1), ConfigError);
}

TEST_CASE("stitching identical constants reproduces the constant exactly", "[stitch]") {
    Manifest man;
    man.layout.full_w = 10;
    man.layout.full_h = 6;
    man.layout.patch = 4;
    // overlapping grid of 4x4 patches at stride 2, extending past the canvas
    std::map<std::string, ScalarGrid> probs;
    int idx = 0;
    for (int y = -2; y <= 4; y += 2) {
        for (int x = -2; x <= 8; x += 2) {
            std::string name = "p" + std::to_string(idx++);
            man.entries.push_back({name, PatchRef{x, y, 4, 4, Split::val}});
            probs.emplace(name, ScalarGrid(4, 4, 0.37));
        }
    }
    WeightMap w = make_weight_map(4);
    ScalarGrid out = stitch(probs, man, w, 10, 6);
    for (double v : out.samples()) {
        REQUIRE(std::abs(v - 0.37) < 1e-9);
    }
}

TEST_CASE("stitching averages overlaps by weight and zeroes uncovered pixels", "[stitch]") {
    Manifest man;
    man.layout.full_w = 8;
    man.layout.full_h = 4;
    man.layout.patch = 4;
    man.entries.push_back({"a", PatchRef{0, 0, 4, 4, Split::val}});
    man.entries.push_back({"b", PatchRef{2, 0, 4, 4, Split::val}});
    std::map<std::string, ScalarGrid> probs;
    probs.emplace("a", ScalarGrid(4, 4, 0.2));
    probs.emplace("b", ScalarGrid(4, 4, 0.8));
    WeightMap w = make_weight_map(4);
    ScalarGrid out = stitch(probs, man, w, 8, 4);

    // pixel (3,1): patch a local (3,1), patch b local (1,1)
    double wa = w.at(3, 1), wb = w.at(1, 1);
    double expect = (wa * 0.2 + wb * 0.8) / (wa + wb);
    REQUIRE(out.at(3, 1) == Catch::Approx(expect).margin(1e-12));
    // non-overlap region keeps its single patch value
    REQUIRE(out.at(1, 1) == Catch::Approx(0.2).margin(1e-12));
    REQUIRE(out.at(5, 2) == Catch::Approx(0.8).margin(1e-12));
    // uncovered pixels stay zero
    REQUIRE(out.at(6, 0) == 0.0);
    REQUIRE(out.at(7, 3) == 0.0);
    // bounded by contributing values
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) {
            REQUIRE(out.at(x, y) >= 0.2 - 1e-12);
            REQUIRE(out.at(x, y) <= 0.8 + 1e-12);
        }
    }
}

TEST_CASE("half resolution patches are upsampled before blending", "[stitch]") {
    Manifest man;
    man.layout.full_w = 4;
    man.layout.full_h = 4;
    man.layout.patch = 4;
    man.entries.push_back({"a", PatchRef{0, 0, 4, 4, Split::val}});

    ScalarGrid half(2, 2);
    half.at(0, 0) = 0.1;
    half.at(1, 0) = 0.3;
    half.at(0, 1) = 0.5;
    half.at(1, 1) = 0.9;
    std::map<std::string, ScalarGrid> probs;
    probs.emplace("a", half);
    WeightMap w = make_weight_map(4);
    ScalarGrid from_half = stitch(probs, man, w, 4, 4);

    std::map<std::string, ScalarGrid> up;
    up.emplace("a", upsample_double(half));
    ScalarGrid from_full = stitch(up, man, w, 4, 4);
    REQUIRE(from_half.samples() == from_full.samples());
}

TEST_CASE("stitch validates inputs", "[stitch]") {
    Manifest man;
    man.layout.full_w = 4;
    man.layout.full_h = 4;
    man.entries.push_back({"a", PatchRef{0, 0, 4, 4, Split::val}});
    WeightMap w = make_weight_map(4);

    std::map<std::string, ScalarGrid> none;
    REQUIRE_THROWS_AS(stitch(none, man, w, 4, 4), DataError);

    std::map<std::string, ScalarGrid> wrong;
    wrong.emplace("a", ScalarGrid(3, 3, 0.5));
    REQUIRE_THROWS_AS(stitch(wrong, man, w, 4, 4), DataError);

    std::map<std::string, ScalarGrid> range;
    range.emplace("a", ScalarGrid(4, 4, 1.5));
    REQUIRE_THROWS_AS(stitch(range, man, w, 4, 4), DataError);

    Manifest badman = man;
    badman.entries[0].ref.w = 6;
    badman.entries[0].ref.h = 6;
    std::map<std::string, ScalarGrid> six;
    six.emplace("a", ScalarGrid(6, 6, 0.5));
    REQUIRE_THROWS_AS(stitch(six, badman, w, 4, 4), DataError);
}

TEST_CASE("object mask zeroes everything outside", "[stitch]") {
    ScalarGrid prob(4, 2, 0.8);
    BinaryMask obj(4, 2, false);
    obj.set(1, 0, true);
    obj.set(2, 1, true);
    ScalarGrid out = apply_object_mask(prob, obj);
    REQUIRE(out.at(1, 0) == 0.8);
    REQUIRE(out.at(2, 1) == 0.8);
    REQUIRE(out.at(0, 0) == 0.0);
    REQUIRE(out.at(3, 1) == 0.0);
    BinaryMask wrong(3, 2, true);
    REQUIRE_THROWS_AS(apply_object_mask(prob, wrong), DataError);
}

TEST_CASE("object mask estimate keeps the disk, fills engravings, drops satellites",
          "[stitch]") {
    // bright disk on dark ground with dark engraved lines and a bright speck
    int w = 96, h = 96;
    ScalarGrid albedo(w, h, 0.15);
    auto inside_disk = [&](int x, int y) {
        double dx = x - 44.0, dy = y - 48.0;
        return dx * dx + dy * dy <= 34.0 * 34.0;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (inside_disk(x, y)) {
                albedo.at(x, y) = 0.8;
            }
        }
    }
    for (int y = 30; y < 65; ++y) {  // engraved line inside the disk
        albedo.at(44, y) = 0.1;
        albedo.at(45, y) = 0.1;
    }
    for (int y = 4; y < 8; ++y) {  // bright satellite blob far from the disk
        for (int x = 88; x < 92; ++x) {
            albedo.at(x, y) = 0.9;
        }
    }
    BinaryMask m = estimate_object_mask(albedo);
    REQUIRE(m.get(44, 48));
    REQUIRE(m.get(44, 40));  // engraving filled in
    REQUIRE(m.get(45, 60));
    REQUIRE_FALSE(m.get(89, 5));  // satellite removed
    REQUIRE_FALSE(m.get(2, 2));
    // mask contains the full disk
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (inside_disk(x, y)) {
                REQUIRE(m.get(x, y));
            }
        }
    }
}

TEST_CASE("threshold sweep reports 19 rows and masking never hurts", "[stitch]") {
    // probability map with in-object signal and off-object false positives
    int w = 64, h = 64;
    BinaryMask object(w, h, false);
    for (int y = 8; y < 56; ++y) {
        for (int x = 8; x < 56; ++x) {
            object.set(x, y, true);
        }
    }
    BinaryMask gt(w, h, false);
    for (int x = 16; x < 48; ++x) {
        gt.set(x, 30, true);
        gt.set(x, 31, true);
    }
    ScalarGrid prob(w, h, 0.02);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (gt.get(x, y)) {
                prob.at(x, y) = 0.9;
            } else if (!object.get(x, y) && (x * 7 + y * 13) % 9 == 0) {
                prob.at(x, y) = 0.6;  // rim clutter outside the object
            }
        }
    }
    SweepTable t = threshold_sweep(prob, gt, object);
    REQUIRE(t.rows.size() == 19);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        REQUIRE(t.rows[i].threshold == Catch::Approx((i + 1) / 20.0));
        if (t.rows[i].raw.pfm) {
            REQUIRE(t.rows[i].masked.pfm.has_value());
            REQUIRE(*t.rows[i].masked.pfm >= *t.rows[i].raw.pfm - 1e-12);
        }
    }
    REQUIRE(t.best_masked >= 0);
    REQUIRE(t.best_raw >= 0);
    // the clutter sits between 0.5 and 0.7, so masking strictly wins there
    const SweepRow& mid = t.rows[11];  // threshold 0.6
    REQUIRE(*mid.masked.pfm > *mid.raw.pfm);

    nlohmann::json j = sweep_to_json(t);
    REQUIRE(j["rows"].size() == 19);
    REQUIRE(j["best_masked"].get<int>() == t.best_masked);
}

TEST_CASE("threshold sweep with empty reference yields flagged rows not a crash", "[stitch]") {
    ScalarGrid prob(16, 16, 0.4);
    BinaryMask gt(16, 16, false);
    BinaryMask object(16, 16, true);
    SweepTable t = threshold_sweep(prob, gt, object);
    REQUIRE(t.rows.size() == 19);
    for (const SweepRow& r : t.rows) {
        REQUIRE_FALSE(r.raw.pfm.has_value());
        REQUIRE_FALSE(r.masked.pfm.has_value());
    }
    REQUIRE(t.best_raw == -1);
    REQUIRE(t.best_masked == -1);
}
