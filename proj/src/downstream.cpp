#include "kenn/downstream.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include "kenn/error.hpp"
#include "kenn/parallel.hpp"

namespace kenn {

namespace {

std::vector<std::pair<int, int>> upper_pairs(int n) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
}

Tensor<float> measures_to_batch(const std::vector<GridMeasure>& items) {
    const int h = items[0].height, w = items[0].width;
    Tensor<float> batch = Tensor<float>::zeros({static_cast<int>(items.size()), 1, h, w});
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].height != h || items[i].width != w)
            throw input_error("pairwise: items must share one grid size");
        float* row = batch.data.data() + static_cast<int64_t>(i) * h * w;
        for (int k = 0; k < h * w; ++k) row[k] = static_cast<float>(items[i].weights[static_cast<size_t>(k)]);
    }
    return batch;
}

}  // namespace

void ExactBackend::fill(const std::vector<GridMeasure>& items, DistanceMatrix& out,
                        int workers) const {
    const auto cost = ground_cost(items[0].height, items[0].width);
    const auto pairs = upper_pairs(out.n);
    parallel_for(static_cast<int64_t>(pairs.size()), workers, [&](int64_t k) {
        const auto [i, j] = pairs[static_cast<size_t>(k)];
        try {
            out.at(i, j) = exact_w2(items[static_cast<size_t>(i)], items[static_cast<size_t>(j)], cost);
        } catch (const error& e) {
            throw data_error(std::string(e.what()) + " (pair " + std::to_string(i) + "," +
                             std::to_string(j) + ")");
        }
    });
}

void SurrogateBackend::fill(const std::vector<GridMeasure>& items, DistanceMatrix& out,
                            int workers) const {
    const auto embeddings = surrogate_embeddings(model_, measures_to_batch(items));
    const auto pairs = upper_pairs(out.n);
    parallel_for(static_cast<int64_t>(pairs.size()), workers, [&](int64_t k) {
        const auto [i, j] = pairs[static_cast<size_t>(k)];
        const auto& a = embeddings[static_cast<size_t>(i)];
        const auto& b = embeddings[static_cast<size_t>(j)];
        double acc = 0.0;
        for (size_t t = 0; t < a.size(); ++t) {
            const double d = static_cast<double>(a[t]) - static_cast<double>(b[t]);
            acc += d * d;
        }
        out.at(i, j) = std::sqrt(acc + 1e-12);
    });
}

DistanceMatrix pairwise_matrix(const std::vector<GridMeasure>& items,
                               const DistanceBackend& backend, int workers) {
    if (items.empty()) throw input_error("pairwise_matrix: no items");
    DistanceMatrix out;
    out.n = static_cast<int>(items.size());
    out.entries.assign(static_cast<size_t>(out.n) * out.n, 0.0);
    out.provenance = backend.name();
    backend.fill(items, out, workers);
    for (int i = 0; i < out.n; ++i)
        for (int j = i + 1; j < out.n; ++j) out.at(j, i) = out.at(i, j);
    return out;
}

EmbedResult isomap_embed(const DistanceMatrix& D, int k_neighbors, int target_dim) {
    const int n = D.n;
    if (n < 2) throw input_error("isomap_embed: need at least two items");
    if (k_neighbors < 1 || k_neighbors > n - 1)
        throw input_error("isomap_embed: k_neighbors must be in [1, n-1]");
    if (target_dim < 1) throw input_error("isomap_embed: target dim must be >= 1");

    // kNN graph, union-symmetrized: edge kept if either endpoint selects it.
    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<size_t>(n));
    {
        std::vector<std::vector<char>> keep(static_cast<size_t>(n), std::vector<char>(static_cast<size_t>(n), 0));
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            order.clear();
            for (int j = 0; j < n; ++j)
                if (j != i) order.push_back(j);
            std::partial_sort(order.begin(), order.begin() + k_neighbors, order.end(),
                              [&](int a, int b) {
                                  return D.at(i, a) != D.at(i, b) ? D.at(i, a) < D.at(i, b) : a < b;
                              });
            for (int k = 0; k < k_neighbors; ++k) {
                const int j = order[static_cast<size_t>(k)];
                keep[static_cast<size_t>(i)][static_cast<size_t>(j)] = 1;
                keep[static_cast<size_t>(j)][static_cast<size_t>(i)] = 1;
            }
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (keep[static_cast<size_t>(i)][static_cast<size_t>(j)])
                    adj[static_cast<size_t>(i)].emplace_back(j, D.at(i, j));
    }

    // connectivity
    {
        std::vector<int> comp(static_cast<size_t>(n), -1);
        int n_comp = 0;
        for (int s = 0; s < n; ++s) {
            if (comp[static_cast<size_t>(s)] >= 0) continue;
            std::vector<int> stack{s};
            comp[static_cast<size_t>(s)] = n_comp;
            while (!stack.empty()) {
                const int u = stack.back();
                stack.pop_back();
                for (const auto& [v, w] : adj[static_cast<size_t>(u)])
                    if (comp[static_cast<size_t>(v)] < 0) {
                        comp[static_cast<size_t>(v)] = n_comp;
                        stack.push_back(v);
                    }
            }
            ++n_comp;
        }
        if (n_comp > 1)
            throw data_error("isomap_embed: kNN graph is disconnected (" + std::to_string(n_comp) +
                             " components)");
    }

    // geodesics: Dijkstra from every source
    Eigen::MatrixXd G2(n, n);
    {
        std::vector<double> dist(static_cast<size_t>(n));
        std::vector<char> done(static_cast<size_t>(n));
        for (int s = 0; s < n; ++s) {
            std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
            std::fill(done.begin(), done.end(), 0);
            dist[static_cast<size_t>(s)] = 0.0;
            using Item = std::pair<double, int>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            pq.emplace(0.0, s);
            while (!pq.empty()) {
                const auto [d, u] = pq.top();
                pq.pop();
                if (done[static_cast<size_t>(u)]) continue;
                done[static_cast<size_t>(u)] = 1;
                for (const auto& [v, w] : adj[static_cast<size_t>(u)])
                    if (d + w < dist[static_cast<size_t>(v)]) {
                        dist[static_cast<size_t>(v)] = d + w;
                        pq.emplace(dist[static_cast<size_t>(v)], v);
                    }
            }
            for (int j = 0; j < n; ++j) G2(s, j) = dist[static_cast<size_t>(j)] * dist[static_cast<size_t>(j)];
        }
        G2 = ((G2 + G2.transpose()) / 2.0).eval();  // guard fp asymmetry
    }

    // classical MDS: B = -1/2 J G2 J
    Eigen::MatrixXd B = -0.5 * G2;
    const Eigen::VectorXd row_mean = B.rowwise().mean();
    B.colwise() -= row_mean;
    const Eigen::RowVectorXd col_mean = B.colwise().mean();
    B.rowwise() -= col_mean;
    B = ((B + B.transpose()) / 2.0).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(B);
    if (solver.info() != Eigen::Success)
        throw numeric_error("isomap_embed: eigendecomposition failed");

    EmbedResult result;
    result.n = n;
    // ascending from Eigen -> descending
    const Eigen::VectorXd evals = solver.eigenvalues().reverse();
    const Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();
    result.eigenvalues.assign(evals.data(), evals.data() + n);

    double total_abs = 0.0, neg_abs = 0.0;
    for (int i = 0; i < n; ++i) {
        total_abs += std::abs(evals(i));
        if (evals(i) < 0) neg_abs += std::abs(evals(i));
    }
    result.dropped_negative_mass = total_abs > 0 ? neg_abs / total_abs : 0.0;

    const double eps = 1e-12 * std::max(1.0, std::abs(evals(0)));
    int positive = 0;
    while (positive < n && evals(positive) > eps) ++positive;
    result.dim = std::min(target_dim, positive);
    if (result.dim < 1)
        throw data_error("isomap_embed: no positive eigenvalues, nothing to embed");

    result.coords.assign(static_cast<size_t>(n) * result.dim, 0.0);
    for (int c = 0; c < result.dim; ++c) {
        Eigen::VectorXd col = evecs.col(c) * std::sqrt(evals(c));
        // sign convention: largest-|coordinate| entry made positive
        int arg = 0;
        for (int i = 1; i < n; ++i)
            if (std::abs(col(i)) > std::abs(col(arg))) arg = i;
        if (col(arg) < 0) col = -col;
        for (int i = 0; i < n; ++i)
            result.coords[static_cast<size_t>(i) * result.dim + c] = col(i);
    }
    return result;
}

BenchStats bench_backend(const std::vector<GridMeasure>& items, const DistanceBackend& backend,
                         int repetitions, int workers) {
    if (repetitions < 1) throw input_error("bench_backend: repetitions must be >= 1");
    const int n = static_cast<int>(items.size());
    const int64_t n_pairs = static_cast<int64_t>(n) * (n - 1) / 2;
    if (n_pairs < 10) throw input_error("bench_backend: need at least 10 pairs");

    using clock = std::chrono::steady_clock;
    std::vector<double> per_pair_ms;

    if (dynamic_cast<const ExactBackend*>(&backend) != nullptr) {
        const auto cost = ground_cost(items[0].height, items[0].width);
        const auto pairs = upper_pairs(n);
        per_pair_ms.reserve(pairs.size() * static_cast<size_t>(repetitions));
        for (int r = 0; r < repetitions; ++r)
            for (const auto& [i, j] : pairs) {
                const auto t0 = clock::now();
                volatile double d = exact_w2(items[static_cast<size_t>(i)], items[static_cast<size_t>(j)], cost);
                (void)d;
                const auto t1 = clock::now();
                per_pair_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
    } else {
        // batched pipeline; per-pair latency amortized per repetition
        per_pair_ms.reserve(static_cast<size_t>(repetitions));
        for (int r = 0; r < repetitions; ++r) {
            const auto t0 = clock::now();
            const auto D = pairwise_matrix(items, backend, workers);
            (void)D;
            const auto t1 = clock::now();
            per_pair_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                                  static_cast<double>(n_pairs));
        }
    }

    std::sort(per_pair_ms.begin(), per_pair_ms.end());
    BenchStats stats;
    stats.pairs = static_cast<int>(n_pairs);
    stats.median_ms = per_pair_ms[per_pair_ms.size() / 2];
    stats.p95_ms = per_pair_ms[std::min(per_pair_ms.size() - 1,
                                        static_cast<size_t>(std::ceil(0.95 * per_pair_ms.size())) )];
    return stats;
}

void write_matrix_csv(const std::string& path, const DistanceMatrix& D) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path);
    out << D.n << '\n';
    char buf[64];
    for (int i = 0; i < D.n; ++i) {
        for (int j = 0; j < D.n; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", D.at(i, j));
            out << buf << (j + 1 < D.n ? "," : "");
        }
        out << '\n';
    }
}

DistanceMatrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open matrix: " + path);
    DistanceMatrix D;
    std::string line;
    if (!std::getline(in, line)) throw input_error("empty matrix file: " + path);
    try {
        D.n = std::stoi(line);
    } catch (const std::exception&) {
        throw input_error("malformed matrix header in " + path);
    }
    if (D.n < 1) throw input_error("malformed matrix header in " + path);
    D.entries.reserve(static_cast<size_t>(D.n) * D.n);
    for (int i = 0; i < D.n; ++i) {
        if (!std::getline(in, line)) throw input_error("truncated matrix file: " + path);
        std::stringstream ss(line);
        std::string field;
        int j = 0;
        while (std::getline(ss, field, ',')) {
            try {
                D.entries.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw input_error("malformed matrix entry at row " + std::to_string(i) + ": " + path);
            }
            ++j;
        }
        if (j != D.n) throw input_error("matrix row " + std::to_string(i) + " has " +
                                        std::to_string(j) + " entries, expected " + std::to_string(D.n));
    }
    return D;
}

void write_embedding_csv(const std::string& path, const EmbedResult& result) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path);
    out << "index";
    for (int c = 0; c < result.dim; ++c) out << ",c" << c;
    out << '\n';
    char buf[64];
    for (int i = 0; i < result.n; ++i) {
        out << i;
        for (int c = 0; c < result.dim; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", result.coords[static_cast<size_t>(i) * result.dim + c]);
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace kenn
