#include "kenn/measures.hpp"

#include <cmath>

#include "kenn/error.hpp"

namespace kenn {

namespace {

GridMeasure normalize_from_total(std::vector<double> w, int height, int width, double total) {
    if (!(total > 0.0))
        throw data_error("degenerate measure: image has no positive intensity");
    for (auto& x : w) x /= total;
    // One compensation pass keeps the mass balance below the solver's
    // 1e-9 input tolerance even on 784-point supports.
    double sum = 0.0;
    for (double x : w) sum += x;
    const double corr = 1.0 / sum;
    for (auto& x : w) x *= corr;
    return GridMeasure{height, width, std::move(w)};
}

}  // namespace

GridMeasure normalize_image(const std::vector<double>& raw, int height, int width) {
    if (height < 1 || width < 1)
        throw input_error("normalize_image: grid dimensions must be >= 1");
    if (raw.size() != static_cast<size_t>(height) * width)
        throw input_error("normalize_image: intensity grid size does not match H*W");
    double total = 0.0;
    for (double v : raw) {
        if (v < 0.0 || !std::isfinite(v))
            throw input_error("normalize_image: intensities must be finite and nonnegative");
        total += v;
    }
    return normalize_from_total(raw, height, width, total);
}

GridMeasure normalize_image(const std::vector<uint8_t>& raw, int height, int width) {
    if (height < 1 || width < 1)
        throw input_error("normalize_image: grid dimensions must be >= 1");
    if (raw.size() != static_cast<size_t>(height) * width)
        throw input_error("normalize_image: intensity grid size does not match H*W");
    uint64_t total = 0;
    for (uint8_t v : raw) total += v;
    std::vector<double> w(raw.begin(), raw.end());
    return normalize_from_total(std::move(w), height, width, static_cast<double>(total));
}

GroundCost ground_cost(int height, int width) {
    if (height < 1 || width < 1)
        throw input_error("ground_cost: grid dimensions must be >= 1");
    const int n = height * width;
    GroundCost cost;
    cost.height = height;
    cost.width = width;
    cost.entries.resize(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        const int ri = i / width, ci = i % width;
        for (int j = 0; j <= i; ++j) {
            const int rj = j / width, cj = j % width;
            const double dr = ri - rj, dc = ci - cj;
            const double c = dr * dr + dc * dc;
            cost.entries[static_cast<size_t>(i) * n + j] = c;
            cost.entries[static_cast<size_t>(j) * n + i] = c;
        }
    }
    return cost;
}

}  // namespace kenn
