#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kenn/error.hpp"
#include "kenn/exact_ot.hpp"
#include "kenn/rng.hpp"

using namespace kenn;

namespace {

GridMeasure random_measure(Rng& rng, int h, int w, double sparsity = 0.5) {
    std::vector<double> raw(static_cast<size_t>(h) * w, 0.0);
    for (auto& v : raw)
        if (rng.uniform() > sparsity) v = rng.uniform(0.1, 1.0);
    raw[static_cast<size_t>(rng.uniform_int(0, h * w - 1))] += 0.5;
    return normalize_image(raw, h, w);
}

std::vector<int> random_support(Rng& rng, int n, int grid) {
    std::vector<int> all(static_cast<size_t>(grid));
    for (int i = 0; i < grid; ++i) all[static_cast<size_t>(i)] = i;
    rng.shuffle(all);
    all.resize(static_cast<size_t>(n));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

TEST_CASE("exact_w2: identity of indiscernibles") {
    Rng rng(21);
    const auto cost = ground_cost(8, 8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mu = random_measure(rng, 8, 8);
        CHECK(exact_w2(mu, mu, cost) <= 1e-9);
    }
}

TEST_CASE("exact_w2: single Dirac transport is the Euclidean distance") {
    const auto cost = ground_cost(8, 8);
    const auto mu = uniform_support({0 * 8 + 0}, 8, 8);
    const auto nu = uniform_support({3 * 8 + 4}, 8, 8);
    CHECK(exact_w2(mu, nu, cost) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("exact_w2: two-point matching on a 1x4 grid") {
    // both matchings enumerated: (1+1)/2 = 1 vs (9+1)/2 = 5; min is 1
    const auto cost = ground_cost(1, 4);
    const auto mu = uniform_support({0, 2}, 1, 4);
    const auto nu = uniform_support({1, 3}, 1, 4);
    CHECK(exact_w2(mu, nu, cost) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("exact_w2: symmetry over random pairs") {
    Rng rng(22);
    const auto cost = ground_cost(8, 8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mu = random_measure(rng, 8, 8);
        const auto nu = random_measure(rng, 8, 8);
        CHECK(std::abs(exact_w2(mu, nu, cost) - exact_w2(nu, mu, cost)) <= 1e-9);
    }
}

TEST_CASE("exact_w2: triangle inequality on random triples") {
    Rng rng(23);
    const auto cost = ground_cost(6, 6);
    for (int trial = 0; trial < 60; ++trial) {
        const auto a = random_measure(rng, 6, 6);
        const auto b = random_measure(rng, 6, 6);
        const auto c = random_measure(rng, 6, 6);
        CHECK(exact_w2(a, c, cost) <= exact_w2(a, b, cost) + exact_w2(b, c, cost) + 1e-7);
    }
}

TEST_CASE("exact_w2: transport plan is a feasible coupling") {
    Rng rng(24);
    const auto cost = ground_cost(7, 5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto mu = random_measure(rng, 7, 5);
        const auto nu = random_measure(rng, 7, 5);
        const auto result = exact_w2_with_plan(mu, nu, cost);
        std::vector<double> row(static_cast<size_t>(mu.size()), 0.0), col(static_cast<size_t>(nu.size()), 0.0);
        for (const auto& e : result.plan.entries) {
            CHECK(e.mass >= 0.0);
            row[static_cast<size_t>(e.src)] += e.mass;
            col[static_cast<size_t>(e.dst)] += e.mass;
        }
        for (int i = 0; i < mu.size(); ++i)
            CHECK(std::abs(row[static_cast<size_t>(i)] - mu.weights[static_cast<size_t>(i)]) <= 1e-9);
        for (int j = 0; j < nu.size(); ++j)
            CHECK(std::abs(col[static_cast<size_t>(j)] - nu.weights[static_cast<size_t>(j)]) <= 1e-9);
        CHECK(result.distance == doctest::Approx(std::sqrt(result.plan.total_cost)).epsilon(1e-12));
    }
}

TEST_CASE("exact_w2: deterministic across repeated solves") {
    Rng rng(25);
    const auto cost = ground_cost(8, 8);
    const auto mu = random_measure(rng, 8, 8);
    const auto nu = random_measure(rng, 8, 8);
    const auto r1 = exact_w2_with_plan(mu, nu, cost);
    const auto r2 = exact_w2_with_plan(mu, nu, cost);
    CHECK(r1.distance == r2.distance);
    REQUIRE(r1.plan.entries.size() == r2.plan.entries.size());
    for (size_t i = 0; i < r1.plan.entries.size(); ++i) {
        CHECK(r1.plan.entries[i].src == r2.plan.entries[i].src);
        CHECK(r1.plan.entries[i].dst == r2.plan.entries[i].dst);
        CHECK(r1.plan.entries[i].mass == r2.plan.entries[i].mass);
    }
}

TEST_CASE("exact_w2: unbalanced input rejected") {
    const auto cost = ground_cost(2, 2);
    auto mu = uniform_support({0, 3}, 2, 2);
    auto nu = uniform_support({1, 2}, 2, 2);
    mu.weights[0] += 1e-6;  // break the mass balance beyond 1e-9
    CHECK_THROWS_WITH_AS(exact_w2(mu, nu, cost), doctest::Contains("unbalanced"), data_error);
}

TEST_CASE("exact_w2: translation by an integer vector costs its length") {
    Rng rng(26);
    const auto cost = ground_cost(12, 12);
    // mass confined to the top-left 6x6 block, then shifted by (3, 4)
    std::vector<double> raw(144, 0.0);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) raw[static_cast<size_t>(y) * 12 + x] = rng.uniform(0.0, 1.0);
    raw[0] += 0.3;
    const auto mu = normalize_image(raw, 12, 12);
    std::vector<double> shifted(144, 0.0);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            shifted[static_cast<size_t>(y + 3) * 12 + (x + 4)] = raw[static_cast<size_t>(y) * 12 + x];
    const auto nu = normalize_image(shifted, 12, 12);
    CHECK(exact_w2(mu, nu, cost) == doctest::Approx(5.0).epsilon(1e-7));
}

TEST_CASE("assignment_oracle: fixed points") {
    const auto cost = ground_cost(4, 4);
    CHECK(assignment_oracle({5}, {5}, cost) == 0.0);
    // {(0,0),(0,1)} -> {(0,1),(0,2)}: both permutations enumerated, min cost 1
    CHECK(assignment_oracle({0, 1}, {1, 2}, cost) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("assignment_oracle: rejects unequal sizes") {
    const auto cost = ground_cost(4, 4);
    CHECK_THROWS_AS(assignment_oracle({0, 1}, {1}, cost), input_error);
}

TEST_CASE("assignment_oracle agrees with exact_w2 on uniform supports") {
    Rng rng(27);
    const auto cost = ground_cost(6, 6);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 8));
        const auto src = random_support(rng, n, 36);
        const auto dst = random_support(rng, n, 36);
        const double lp = exact_w2(uniform_support(src, 6, 6), uniform_support(dst, 6, 6), cost);
        const double oracle = assignment_oracle(src, dst, cost);
        CHECK(std::abs(lp - oracle) <= 1e-7);
    }
}

TEST_CASE("assignment_oracle: Hungarian branch agrees with the LP on larger supports") {
    Rng rng(28);
    const auto cost = ground_cost(9, 9);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(12, 40));
        const auto src = random_support(rng, n, 81);
        const auto dst = random_support(rng, n, 81);
        const double lp = exact_w2(uniform_support(src, 9, 9), uniform_support(dst, 9, 9), cost);
        const double oracle = assignment_oracle(src, dst, cost);
        CHECK(std::abs(lp - oracle) <= 1e-7);
    }
}
