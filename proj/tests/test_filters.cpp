#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <etch/filters.hpp>
#include <etch/rng.hpp>

#include "helpers.hpp"

using namespace etch;

TEST_CASE("gaussian kernel is normalized, symmetric and 4 sigma wide", "[filters]") {
    auto k = gaussian_kernel(2.0);
    REQUIRE(k.size() == 2 * 8 + 1);
    double sum = 0.0;
    for (double v : k) {
        sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t i = 0; i < k.size() / 2; ++i) {
        REQUIRE(k[i] == Catch::Approx(k[k.size() - 1 - i]).margin(1e-15));
    }
    REQUIRE_THROWS_AS(gaussian_kernel(0.0), ConfigError);
    REQUIRE_THROWS_AS(gaussian_kernel(-1.0), ConfigError);
}

TEST_CASE("blur of a constant grid is the identity", "[filters]") {
    ScalarGrid g(17, 9, 0.37);
    ScalarGrid out = gaussian_blur(g, 3.0);
    for (double v : out.samples()) {
        REQUIRE(v == Catch::Approx(0.37).margin(1e-12));
    }
}

TEST_CASE("separable blur equals direct 2d convolution with reflection", "[filters]") {
    Rng rng(5);
    ScalarGrid g(11, 8);
    for (double& v : g.samples()) {
        v = rng.uniform(-1.0, 1.0);
    }
    double sigma = 1.3;
    ScalarGrid fast = gaussian_blur(g, sigma);

    auto k = gaussian_kernel(sigma);
    int r = static_cast<int>(k.size() / 2);
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    acc += k[static_cast<std::size_t>(dx + r)] * k[static_cast<std::size_t>(dy + r)] *
                           g.at(reflect_index(x + dx, g.width()), reflect_index(y + dy, g.height()));
                }
            }
            REQUIRE(fast.at(x, y) == Catch::Approx(acc).margin(1e-12));
        }
    }
}

TEST_CASE("integral image sums match direct accumulation", "[filters]") {
    Rng rng(9);
    ScalarGrid g(13, 7);
    for (double& v : g.samples()) {
        v = rng.uniform(0.0, 2.0);
    }
    IntegralImage ii(g);
    IntegralImage ii2(g, true);
    for (auto [x0, y0, x1, y1] : {std::tuple{0, 0, 13, 7}, {1, 2, 5, 6}, {4, 0, 5, 1},
                                  {0, 3, 13, 4}, {6, 1, 12, 7}}) {
        double s = 0.0, sq = 0.0;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                s += g.at(x, y);
                sq += g.at(x, y) * g.at(x, y);
            }
        }
        REQUIRE(ii.sum(x0, y0, x1, y1) == Catch::Approx(s).margin(1e-9));
        REQUIRE(ii2.sum(x0, y0, x1, y1) == Catch::Approx(sq).margin(1e-9));
    }
}

TEST_CASE("pad_reflect mirrors without repeating the edge twice beyond it", "[filters]") {
    ScalarGrid g(3, 1);
    g.at(0, 0) = 1.0;
    g.at(1, 0) = 2.0;
    g.at(2, 0) = 3.0;
    ScalarGrid p = pad_reflect(g, 2);
    REQUIRE(p.width() == 7);
    // pattern: 2 1 | 1 2 3 | 3 2
    REQUIRE(p.at(0, 0) == 2.0);
    REQUIRE(p.at(1, 0) == 1.0);
    REQUIRE(p.at(2, 0) == 1.0);
    REQUIRE(p.at(4, 0) == 3.0);
    REQUIRE(p.at(5, 0) == 3.0);
    REQUIRE(p.at(6, 0) == 2.0);
}

TEST_CASE("percentile interpolates order statistics", "[filters]") {
    std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
    REQUIRE(percentile(v, 0.0) == 1.0);
    REQUIRE(percentile(v, 100.0) == 4.0);
    REQUIRE(percentile(v, 50.0) == Catch::Approx(2.5));
    REQUIRE(percentile({7.0}, 99.5) == 7.0);
    REQUIRE_THROWS_AS(percentile({}, 50.0), ConfigError);
}
