#include <doctest.h>

#include "kenn/error.hpp"
#include "kenn/measures.hpp"
#include "kenn/rng.hpp"

using namespace kenn;

TEST_CASE("normalize_image: uniform 2x2 grid") {
    const auto m = normalize_image(std::vector<double>{1, 1, 1, 1}, 2, 2);
    for (double w : m.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("normalize_image: proportional weights") {
    const auto m = normalize_image(std::vector<double>{2, 0, 0, 2}, 2, 2);
    CHECK(m.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.weights[1] == 0.0);
    CHECK(m.weights[2] == 0.0);
    CHECK(m.weights[3] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalize_image: all-zero image is a degenerate measure") {
    CHECK_THROWS_AS(normalize_image(std::vector<double>(9, 0.0), 3, 3), data_error);
    CHECK_THROWS_WITH_AS(normalize_image(std::vector<double>(9, 0.0), 3, 3),
                         doctest::Contains("degenerate measure"), data_error);
}

TEST_CASE("normalize_image: mass sums to 1 within 1e-12") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> raw(28 * 28);
        for (auto& v : raw) v = rng.uniform() < 0.7 ? 0.0 : rng.uniform(0.0, 255.0);
        raw[0] += 1.0;  // ensure nonzero
        const auto m = normalize_image(raw, 28, 28);
        double sum = 0.0;
        for (double w : m.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("normalize_image: scale invariance") {
    Rng rng(12);
    std::vector<double> raw(64);
    for (auto& v : raw) v = rng.uniform(0.0, 10.0);
    const auto base = normalize_image(raw, 8, 8);
    for (double alpha : {0.5, 2.0, 3.7, 1e-3, 1e4}) {
        auto scaled = raw;
        for (auto& v : scaled) v *= alpha;
        const auto m = normalize_image(scaled, 8, 8);
        for (size_t i = 0; i < m.weights.size(); ++i)
            CHECK(m.weights[i] == doctest::Approx(base.weights[i]).epsilon(1e-14));
    }
}

TEST_CASE("ground_cost: 1x2 grid") {
    const auto c = ground_cost(1, 2);
    CHECK(c.at(0, 0) == 0.0);
    CHECK(c.at(0, 1) == 1.0);
    CHECK(c.at(1, 0) == 1.0);
    CHECK(c.at(1, 1) == 0.0);
}

TEST_CASE("ground_cost: diagonal neighbors on 2x2 cost 2") {
    const auto c = ground_cost(2, 2);
    CHECK(c.at(0, 3) == 2.0);  // (0,0) vs (1,1)
    CHECK(c.at(1, 2) == 2.0);
}

TEST_CASE("ground_cost: 1x4 endpoints cost 9") {
    const auto c = ground_cost(1, 4);
    CHECK(c.at(0, 3) == 9.0);
}

TEST_CASE("ground_cost: symmetry, zero diagonal, unit-adjacent") {
    const auto c = ground_cost(5, 7);
    const int n = c.size();
    for (int i = 0; i < n; ++i) {
        CHECK(c.at(i, i) == 0.0);
        for (int j = 0; j < n; ++j) {
            CHECK(c.at(i, j) == c.at(j, i));
            CHECK(c.at(i, j) >= 0.0);
        }
    }
    // horizontal and vertical neighbors
    CHECK(c.at(0, 1) == 1.0);
    CHECK(c.at(0, 7) == 1.0);
}
