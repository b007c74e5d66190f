#pragma once

#include <cstdint>
#include <vector>

namespace kenn {

// A probability measure supported on an H x W pixel grid, weights in
// row-major order. Immutable once constructed; weights sum to 1.
struct GridMeasure {
    int height = 0;
    int width = 0;
    std::vector<double> weights;

    int size() const { return height * width; }
};

// Squared Euclidean distances between pixel centers p_i = (row, col).
// Entries are exact small integers stored as doubles; adjacent pixels
// have cost exactly 1.
struct GroundCost {
    int height = 0;
    int width = 0;
    std::vector<double> entries;  // (H*W)^2, row-major

    int size() const { return height * width; }
    double at(int i, int j) const { return entries[static_cast<size_t>(i) * size() + j]; }
};

// Normalizes a nonnegative intensity grid to unit mass. All-zero input is
// rejected ("degenerate measure").
GridMeasure normalize_image(const std::vector<double>& raw, int height, int width);
GridMeasure normalize_image(const std::vector<uint8_t>& raw, int height, int width);

GroundCost ground_cost(int height, int width);

}  // namespace kenn
