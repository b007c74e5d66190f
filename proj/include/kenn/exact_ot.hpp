#pragma once

#include <vector>

#include "kenn/measures.hpp"

namespace kenn {

// One nonzero entry of an optimal coupling; src/dst are grid indices.
struct PlanEntry {
    int src = 0;
    int dst = 0;
    double mass = 0.0;
};

struct TransportPlan {
    std::vector<PlanEntry> entries;
    double total_cost = 0.0;  // sum of mass * squared ground distance (pixel^2)
};

struct W2Result {
    double distance = 0.0;  // pixel units
    TransportPlan plan;
};

// Exact W2 between grid measures: min-cost flow on the bipartite graph of
// positive-weight pixels (successive shortest paths with potentials,
// lowest-index tie-breaks, weights quantized to 1e-9 integral units).
W2Result exact_w2_with_plan(const GridMeasure& mu, const GridMeasure& nu, const GroundCost& cost);
double exact_w2(const GridMeasure& mu, const GridMeasure& nu, const GroundCost& cost);

// Independent verification oracle for uniform equal-size supports:
// exhaustive permutation search for n <= 10, Hungarian assignment for
// n <= 200. Points are grid indices into `cost`.
double assignment_oracle(const std::vector<int>& src, const std::vector<int>& dst,
                         const GroundCost& cost);

// Uniform measure on distinct support pixels (test/bench helper).
GridMeasure uniform_support(const std::vector<int>& pixels, int height, int width);

}  // namespace kenn
