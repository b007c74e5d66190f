#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kenn/measures.hpp"

namespace kenn {

// Images from an IDX container, one byte per pixel.
struct ImageSet {
    int count = 0;
    int height = 0;
    int width = 0;
    std::vector<uint8_t> pixels;  // count * height * width

    const uint8_t* image(int idx) const {
        return pixels.data() + static_cast<size_t>(idx) * height * width;
    }
};

// Big-endian IDX parsing; image magic 0x00000803, label magic 0x00000801.
ImageSet load_idx_images(const std::string& path);
std::vector<uint8_t> load_idx_labels(const std::string& path);
void save_idx_images(const std::string& path, const ImageSet& images);
void save_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);
uint32_t file_crc32(const std::string& path);

struct PairRecord {
    int idx_a = 0;
    int idx_b = 0;
    uint8_t label_a = 0;  // label_a <= label_b
    uint8_t label_b = 0;
    double w2 = -1.0;  // pixel units; negative = unlabeled
};

enum class Split : uint8_t { train = 0, val = 1, test = 2 };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct PairDataset {
    std::vector<PairRecord> records;
    std::vector<Split> splits;  // aligned with records
    uint64_t seed = 0;
    int grid_h = 0;
    int grid_w = 0;
    int pairs_per_combo = 0;
    uint32_t images_crc = 0;
    uint32_t labels_crc = 0;
    std::string images_path;
    std::string labels_path;

    std::vector<int> indices_of(Split s) const;
};

// For each of the 55 class combinations (i <= j), draws `pairs_per_combo`
// distinct unordered pairs uniformly (rejection sampling), reproducibly
// from the seed.
std::vector<PairRecord> sample_pairs(const std::vector<uint8_t>& labels, int pairs_per_combo,
                                     uint64_t seed);

// Fills record.w2 with exact W2; parallel across records, merged by index.
// progress (optional) is called once per completed record.
void label_pairs(std::vector<PairRecord>& records, const ImageSet& images, const GroundCost& cost,
                 int workers, const std::function<void(int64_t)>& progress = {});

// Per combo: 5% val / 5% test (floor, min 1 each), remainder train;
// 1000/combo yields the 900/50/50 full-scale split.
PairDataset split_dataset(std::vector<PairRecord> records, uint64_t seed);

// CSV cache `idx_a,idx_b,label_a,label_b,split,w2` (w2 at 9 significant
// digits) plus a key-value sidecar at <path>.meta.
void save_dataset_csv(const PairDataset& dataset, const std::string& path);
PairDataset load_dataset_csv(const std::string& path);

GridMeasure measure_from_image(const ImageSet& images, int idx);

}  // namespace kenn
