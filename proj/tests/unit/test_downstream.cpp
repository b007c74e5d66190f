#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kenn/downstream.hpp"
#include "kenn/error.hpp"
#include "kenn/rng.hpp"
#include "support/synth_digits.hpp"

using namespace kenn;
namespace fs = std::filesystem;

namespace {

// Euclidean distance matrix of explicit 2-D points
DistanceMatrix euclidean_matrix(const std::vector<std::pair<double, double>>& pts) {
    DistanceMatrix D;
    D.n = static_cast<int>(pts.size());
    D.entries.assign(static_cast<size_t>(D.n) * D.n, 0.0);
    for (int i = 0; i < D.n; ++i)
        for (int j = 0; j < D.n; ++j) {
            const double dx = pts[static_cast<size_t>(i)].first - pts[static_cast<size_t>(j)].first;
            const double dy = pts[static_cast<size_t>(i)].second - pts[static_cast<size_t>(j)].second;
            D.at(i, j) = std::sqrt(dx * dx + dy * dy);
        }
    return D;
}

double embed_dist(const EmbedResult& e, int i, int j) {
    double acc = 0.0;
    for (int c = 0; c < e.dim; ++c) {
        const double d = e.coords[static_cast<size_t>(i) * e.dim + c] -
                         e.coords[static_cast<size_t>(j) * e.dim + c];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("pairwise_matrix: singleton, identical items, Dirac corners") {
    const ExactBackend exact;
    GridMeasure dirac = uniform_support({0}, 2, 2);
    CHECK(pairwise_matrix({dirac}, exact, 1).at(0, 0) == 0.0);

    auto [imgs, labels] = synth::make_corpus(1, 2);
    const auto m = measure_from_image(imgs, 0);
    const auto D = pairwise_matrix({m, m, m}, exact, 2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(D.at(i, j)) <= 1e-6);

    // Diracs at the corners of a unit square: distances {1, 1, sqrt(2)}
    const std::vector<GridMeasure> corners = {
        uniform_support({0}, 2, 2), uniform_support({1}, 2, 2),
        uniform_support({2}, 2, 2), uniform_support({3}, 2, 2)};
    const auto C = pairwise_matrix(corners, exact, 1);
    CHECK(C.at(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(C.at(0, 2) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(C.at(0, 3) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    CHECK(C.at(1, 2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    for (int i = 0; i < 4; ++i) {
        CHECK(C.at(i, i) == 0.0);
        for (int j = 0; j < 4; ++j) CHECK(C.at(i, j) == C.at(j, i));
    }
}

TEST_CASE("surrogate backend: symmetric, zero diagonal, triangle inequality") {
    auto [imgs, labels] = synth::make_corpus(1, 4);
    std::vector<GridMeasure> items;
    for (int i = 0; i < 8; ++i) items.push_back(measure_from_image(imgs, i));
    const SurrogateBackend surro(make_model<float>(ModelKind::deepkenn, {}, 13));
    const auto D = pairwise_matrix(items, surro, 2);
    CHECK(D.provenance == "surrogate(deepkenn)");
    for (int i = 0; i < D.n; ++i) {
        CHECK(D.at(i, i) == 0.0);
        for (int j = 0; j < D.n; ++j) {
            CHECK(D.at(i, j) == D.at(j, i));
            for (int k = 0; k < D.n; ++k)
                CHECK(D.at(i, k) <= D.at(i, j) + D.at(j, k) + 1e-5);
        }
    }
}

TEST_CASE("surrogate backend matches the per-pair distance head") {
    auto [imgs, labels] = synth::make_corpus(1, 6);
    std::vector<GridMeasure> items;
    for (int i = 0; i < 4; ++i) items.push_back(measure_from_image(imgs, i));
    for (const auto kind : {ModelKind::naive, ModelKind::deepkenn, ModelKind::odekenn}) {
        const auto model = make_model<float>(kind, {}, 19);
        const SurrogateBackend surro(model);
        const auto D = pairwise_matrix(items, surro, 1);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) {
                Tensor<float> a = Tensor<float>::zeros({1, 1, 28, 28});
                Tensor<float> b = Tensor<float>::zeros({1, 1, 28, 28});
                for (int k = 0; k < 28 * 28; ++k) {
                    a.data[static_cast<size_t>(k)] = static_cast<float>(items[static_cast<size_t>(i)].weights[static_cast<size_t>(k)]);
                    b.data[static_cast<size_t>(k)] = static_cast<float>(items[static_cast<size_t>(j)].weights[static_cast<size_t>(k)]);
                }
                const double direct = pair_distances(model, a, b)[0];
                CHECK(D.at(i, j) == doctest::Approx(direct).epsilon(1e-4));
            }
    }
}

TEST_CASE("isomap: collinear points recover the line") {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 5; ++i) pts.emplace_back(2.0 * i, 0.0);
    const auto D = euclidean_matrix(pts);
    const auto e = isomap_embed(D, 2, 1);
    REQUIRE(e.dim == 1);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(embed_dist(e, i, j) == doctest::Approx(D.at(i, j)).epsilon(1e-8));
}

TEST_CASE("isomap: full graph on a Euclidean matrix is exact MDS") {
    Rng rng(61);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 12; ++i) pts.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
    const auto D = euclidean_matrix(pts);
    const auto e = isomap_embed(D, 11, 2);
    REQUIRE(e.dim == 2);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            CHECK(std::abs(embed_dist(e, i, j) - D.at(i, j)) <= 1e-6);
    CHECK(e.dropped_negative_mass <= 1e-9);
}

TEST_CASE("isomap: deterministic output") {
    Rng rng(62);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 9; ++i) pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto D = euclidean_matrix(pts);
    const auto e1 = isomap_embed(D, 4, 2);
    const auto e2 = isomap_embed(D, 4, 2);
    CHECK(e1.coords == e2.coords);
}

TEST_CASE("isomap: disconnected graph reports component count") {
    std::vector<std::pair<double, double>> pts = {
        {0, 0}, {1, 0}, {100, 0}, {101, 0}};  // two far clusters, k=1 keeps them apart
    const auto D = euclidean_matrix(pts);
    CHECK_THROWS_WITH_AS(isomap_embed(D, 1, 2), doctest::Contains("2 components"), data_error);
    CHECK_THROWS_AS(isomap_embed(D, 0, 2), input_error);
}

TEST_CASE("matrix csv round trip") {
    const auto tmp = fs::temp_directory_path() / "kenn_matrix_test.csv";
    std::vector<std::pair<double, double>> pts = {{0, 0}, {1, 1}, {2, 0}};
    const auto D = euclidean_matrix(pts);
    write_matrix_csv(tmp.string(), D);
    const auto L = read_matrix_csv(tmp.string());
    REQUIRE(L.n == D.n);
    CHECK(L.entries == D.entries);  // %.17g round-trips doubles exactly
    fs::remove(tmp);
}

TEST_CASE("bench_backend: validates inputs and produces sane stats") {
    auto [imgs, labels] = synth::make_corpus(1, 8);
    std::vector<GridMeasure> items;
    for (int i = 0; i < 5; ++i) items.push_back(measure_from_image(imgs, i));
    const ExactBackend exact;
    CHECK_THROWS_AS(bench_backend(items, exact, 0), input_error);
    CHECK_THROWS_AS(bench_backend({items[0], items[1]}, exact, 1), input_error);  // < 10 pairs

    const auto stats = bench_backend(items, exact, 1);
    CHECK(stats.pairs == 10);
    CHECK(stats.median_ms > 0.0);
    CHECK(stats.p95_ms >= stats.median_ms);
}
