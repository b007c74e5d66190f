#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kenn/exact_ot.hpp"
#include "kenn/measures.hpp"
#include "kenn/models.hpp"

namespace kenn {

// Symmetric by construction: each unordered pair is evaluated once and
// mirrored; the diagonal is exactly zero.
struct DistanceMatrix {
    int n = 0;
    std::vector<double> entries;  // n*n row-major
    std::string provenance;       // "exact" or "surrogate(<kind>)"

    double at(int i, int j) const { return entries[static_cast<size_t>(i) * n + j]; }
    double& at(int i, int j) { return entries[static_cast<size_t>(i) * n + j]; }
};

// A pairwise-distance backend over grid measures.
class DistanceBackend {
public:
    virtual ~DistanceBackend() = default;
    virtual std::string name() const = 0;
    // Fills the strict upper triangle of `out` for the given items.
    virtual void fill(const std::vector<GridMeasure>& items, DistanceMatrix& out,
                      int workers) const = 0;
};

// exact_w2 per pair, parallel across pairs.
class ExactBackend : public DistanceBackend {
public:
    std::string name() const override { return "exact"; }
    void fill(const std::vector<GridMeasure>& items, DistanceMatrix& out,
              int workers) const override;
};

// Trained surrogate: every item is encoded once (stage/trajectory
// embeddings), pair distances are norms of embedding differences.
class SurrogateBackend : public DistanceBackend {
public:
    explicit SurrogateBackend(Model<float> model) : model_(std::move(model)) {}
    std::string name() const override { return "surrogate(" + to_string(model_.kind) + ")"; }
    void fill(const std::vector<GridMeasure>& items, DistanceMatrix& out,
              int workers) const override;
    const Model<float>& model() const { return model_; }

private:
    Model<float> model_;
};

DistanceMatrix pairwise_matrix(const std::vector<GridMeasure>& items,
                               const DistanceBackend& backend, int workers);

struct EmbedResult {
    int n = 0;
    int dim = 0;                    // may be capped at the positive-eigenvalue count
    std::vector<double> coords;     // n x dim row-major
    std::vector<double> eigenvalues;  // all spectrum, descending
    double dropped_negative_mass = 0.0;  // |negative eigenvalues| / total |eigenvalues|
};

// kNN graph on D (union-symmetrized), geodesics by Dijkstra, classical MDS
// on the double-centered squared geodesics. Deterministic ordering: eigen
// pairs descending, component signs fixed by the largest-|coordinate|
// entry.
EmbedResult isomap_embed(const DistanceMatrix& D, int k_neighbors, int target_dim);

struct BenchStats {
    double median_ms = 0.0;
    double p95_ms = 0.0;
    int pairs = 0;
};

// Per-pair wall-clock stats over all unordered pairs of `items`. The exact
// backend is timed per pair; the surrogate is timed per repetition over the
// whole batched pipeline and amortized per pair.
BenchStats bench_backend(const std::vector<GridMeasure>& items, const DistanceBackend& backend,
                         int repetitions, int workers = 1);

void write_matrix_csv(const std::string& path, const DistanceMatrix& D);
DistanceMatrix read_matrix_csv(const std::string& path);
void write_embedding_csv(const std::string& path, const EmbedResult& result);

}  // namespace kenn
