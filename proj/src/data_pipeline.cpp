#include "kenn/data_pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "kenn/crc32.hpp"
#include "kenn/error.hpp"
#include "kenn/exact_ot.hpp"
#include "kenn/parallel.hpp"
#include "kenn/rng.hpp"

namespace kenn {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;
constexpr int kNumClasses = 10;
constexpr int kNumCombos = 55;  // 10 same-class + 45 cross-class

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open file: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

uint32_t read_be32(const std::vector<char>& bytes, size_t offset) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void write_be32(std::ofstream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

int combo_id(int i, int j) {
    // combos (i, j) with i <= j in lexicographic order
    int id = 0;
    for (int a = 0; a < i; ++a) id += kNumClasses - a;
    return id + (j - i);
}

}  // namespace

ImageSet load_idx_images(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 16) throw input_error("truncated IDX image file: " + path);
    const uint32_t magic = read_be32(bytes, 0);
    if (magic != kImageMagic)
        throw input_error("bad magic in IDX image file: " + path);
    ImageSet set;
    set.count = static_cast<int>(read_be32(bytes, 4));
    set.height = static_cast<int>(read_be32(bytes, 8));
    set.width = static_cast<int>(read_be32(bytes, 12));
    if (set.count < 0 || set.height < 1 || set.width < 1)
        throw input_error("bad dimensions in IDX image file: " + path);
    const size_t expected = 16 + static_cast<size_t>(set.count) * set.height * set.width;
    if (bytes.size() < expected) throw input_error("truncated IDX image file: " + path);
    set.pixels.assign(reinterpret_cast<const uint8_t*>(bytes.data()) + 16,
                      reinterpret_cast<const uint8_t*>(bytes.data()) + expected);
    return set;
}

std::vector<uint8_t> load_idx_labels(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 8) throw input_error("truncated IDX label file: " + path);
    const uint32_t magic = read_be32(bytes, 0);
    if (magic != kLabelMagic)
        throw input_error("bad magic in IDX label file: " + path);
    const uint32_t count = read_be32(bytes, 4);
    if (bytes.size() < 8 + static_cast<size_t>(count))
        throw input_error("truncated IDX label file: " + path);
    return std::vector<uint8_t>(reinterpret_cast<const uint8_t*>(bytes.data()) + 8,
                                reinterpret_cast<const uint8_t*>(bytes.data()) + 8 + count);
}

void save_idx_images(const std::string& path, const ImageSet& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write file: " + path);
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<uint32_t>(images.count));
    write_be32(out, static_cast<uint32_t>(images.height));
    write_be32(out, static_cast<uint32_t>(images.width));
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
}

void save_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write file: " + path);
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

uint32_t file_crc32(const std::string& path) {
    const auto bytes = read_file(path);
    return crc32(bytes.data(), bytes.size());
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw input_error("unknown split '" + s + "' (expected train|val|test)");
}

std::vector<int> PairDataset::indices_of(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<PairRecord> sample_pairs(const std::vector<uint8_t>& labels, int pairs_per_combo,
                                     uint64_t seed) {
    if (pairs_per_combo < 1) throw input_error("sample_pairs: pairs_per_combo must be >= 1");
    std::vector<std::vector<int>> by_class(kNumClasses);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= kNumClasses)
            throw input_error("sample_pairs: label out of range at index " + std::to_string(i));
        by_class[labels[i]].push_back(static_cast<int>(i));
    }

    std::vector<PairRecord> records;
    records.reserve(static_cast<size_t>(pairs_per_combo) * kNumCombos);
    for (int i = 0; i < kNumClasses; ++i)
        for (int j = i; j < kNumClasses; ++j) {
            const auto& ci = by_class[static_cast<size_t>(i)];
            const auto& cj = by_class[static_cast<size_t>(j)];
            const int64_t max_pairs =
                i == j ? static_cast<int64_t>(ci.size()) * (static_cast<int64_t>(ci.size()) - 1) / 2
                       : static_cast<int64_t>(ci.size()) * static_cast<int64_t>(cj.size());
            if ((i == j && ci.size() < 2) || cj.empty() || ci.empty() ||
                max_pairs < pairs_per_combo)
                throw data_error("sample_pairs: class combination (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") has only " + std::to_string(max_pairs) +
                                 " distinct pairs, need " + std::to_string(pairs_per_combo));

            Rng rng(mix_seed(seed, 0xC0 + static_cast<uint64_t>(combo_id(i, j))));
            std::set<std::pair<int, int>> seen;
            int64_t attempts = 0;
            const int64_t max_attempts = 1000LL * pairs_per_combo + 1000;
            while (static_cast<int>(seen.size()) < pairs_per_combo) {
                if (++attempts > max_attempts)
                    throw data_error("sample_pairs: rejection sampling stalled for combination (" +
                                     std::to_string(i) + "," + std::to_string(j) + ")");
                int a, b;
                if (i == j) {
                    a = ci[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(ci.size()) - 1))];
                    b = ci[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(ci.size()) - 1))];
                    if (a == b) continue;
                    if (a > b) std::swap(a, b);
                } else {
                    a = ci[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(ci.size()) - 1))];
                    b = cj[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(cj.size()) - 1))];
                }
                if (!seen.emplace(a, b).second) continue;
                PairRecord rec;
                rec.idx_a = a;
                rec.idx_b = b;
                rec.label_a = static_cast<uint8_t>(i);
                rec.label_b = static_cast<uint8_t>(j);
                records.push_back(rec);
            }
        }
    return records;
}

GridMeasure measure_from_image(const ImageSet& images, int idx) {
    if (idx < 0 || idx >= images.count)
        throw input_error("measure_from_image: index out of range");
    std::vector<uint8_t> raw(images.image(idx),
                             images.image(idx) + static_cast<size_t>(images.height) * images.width);
    try {
        return normalize_image(raw, images.height, images.width);
    } catch (const data_error& e) {
        throw data_error(std::string(e.what()) + " (image " + std::to_string(idx) + ")");
    }
}

void label_pairs(std::vector<PairRecord>& records, const ImageSet& images, const GroundCost& cost,
                 int workers, const std::function<void(int64_t)>& progress) {
    // Normalize each referenced image once.
    std::vector<int> used;
    used.reserve(records.size() * 2);
    for (const auto& r : records) {
        used.push_back(r.idx_a);
        used.push_back(r.idx_b);
    }
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    std::vector<GridMeasure> measures(static_cast<size_t>(images.count));
    for (int idx : used) measures[static_cast<size_t>(idx)] = measure_from_image(images, idx);

    parallel_for(static_cast<int64_t>(records.size()), workers, [&](int64_t i) {
        auto& rec = records[static_cast<size_t>(i)];
        try {
            rec.w2 = exact_w2(measures[static_cast<size_t>(rec.idx_a)],
                              measures[static_cast<size_t>(rec.idx_b)], cost);
        } catch (const error& e) {
            throw data_error(std::string(e.what()) + " (pair " + std::to_string(rec.idx_a) + "," +
                             std::to_string(rec.idx_b) + ")");
        }
        if (progress) progress(i);
    });
}

PairDataset split_dataset(std::vector<PairRecord> records, uint64_t seed) {
    PairDataset ds;
    ds.seed = seed;
    ds.splits.assign(records.size(), Split::train);

    std::vector<std::vector<int>> by_combo(kNumCombos);
    for (size_t i = 0; i < records.size(); ++i)
        by_combo[static_cast<size_t>(combo_id(records[i].label_a, records[i].label_b))].push_back(
            static_cast<int>(i));

    for (int c = 0; c < kNumCombos; ++c) {
        auto& idxs = by_combo[static_cast<size_t>(c)];
        if (idxs.empty()) continue;
        const int n = static_cast<int>(idxs.size());
        if (n < 3)
            throw data_error("split_dataset: combination with only " + std::to_string(n) +
                             " records cannot be split (need >= 3)");
        const int held = std::max(1, n / 20);  // 5% floor, min 1
        Rng rng(mix_seed(seed, 0x5B17 + static_cast<uint64_t>(c)));
        rng.shuffle(idxs);
        for (int k = 0; k < held; ++k) ds.splits[static_cast<size_t>(idxs[static_cast<size_t>(k)])] = Split::val;
        for (int k = held; k < 2 * held; ++k)
            ds.splits[static_cast<size_t>(idxs[static_cast<size_t>(k)])] = Split::test;
    }
    ds.records = std::move(records);
    return ds;
}

void save_dataset_csv(const PairDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path);
    out << "idx_a,idx_b,label_a,label_b,split,w2\n";
    char buf[64];
    for (size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& r = dataset.records[i];
        std::snprintf(buf, sizeof buf, "%.9g", r.w2);
        out << r.idx_a << ',' << r.idx_b << ',' << int(r.label_a) << ',' << int(r.label_b) << ','
            << to_string(dataset.splits[i]) << ',' << buf << '\n';
    }
    std::ofstream meta(path + ".meta");
    if (!meta) throw input_error("cannot write file: " + path + ".meta");
    meta << "format_version=1\n";
    meta << "seed=" << dataset.seed << '\n';
    meta << "grid_h=" << dataset.grid_h << '\n';
    meta << "grid_w=" << dataset.grid_w << '\n';
    meta << "pairs_per_combo=" << dataset.pairs_per_combo << '\n';
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", dataset.images_crc);
    meta << "images_crc32=" << crc << '\n';
    std::snprintf(crc, sizeof crc, "%08x", dataset.labels_crc);
    meta << "labels_crc32=" << crc << '\n';
    meta << "images_path=" << dataset.images_path << '\n';
    meta << "labels_path=" << dataset.labels_path << '\n';
    meta << "normalization=unit_mass\n";  // images enter the encoder measure-normalized
}

PairDataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open dataset: " + path);
    PairDataset ds;
    std::string line;
    if (!std::getline(in, line) || line != "idx_a,idx_b,label_a,label_b,split,w2")
        throw input_error("malformed dataset header in " + path);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw input_error("malformed dataset row at line " + std::to_string(lineno) + " in " +
                              path);
        try {
            PairRecord r;
            r.idx_a = std::stoi(fields[0]);
            r.idx_b = std::stoi(fields[1]);
            r.label_a = static_cast<uint8_t>(std::stoi(fields[2]));
            r.label_b = static_cast<uint8_t>(std::stoi(fields[3]));
            r.w2 = std::stod(fields[5]);
            ds.records.push_back(r);
            ds.splits.push_back(split_from_string(fields[4]));
        } catch (const input_error&) {
            throw;
        } catch (const std::exception&) {
            throw input_error("malformed dataset row at line " + std::to_string(lineno) + " in " +
                              path);
        }
    }

    std::ifstream meta(path + ".meta");
    if (!meta) throw input_error("missing dataset metadata: " + path + ".meta");
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        try {
            if (key == "seed") ds.seed = std::stoull(value);
            else if (key == "grid_h") ds.grid_h = std::stoi(value);
            else if (key == "grid_w") ds.grid_w = std::stoi(value);
            else if (key == "pairs_per_combo") ds.pairs_per_combo = std::stoi(value);
            else if (key == "images_crc32") ds.images_crc = static_cast<uint32_t>(std::stoul(value, nullptr, 16));
            else if (key == "labels_crc32") ds.labels_crc = static_cast<uint32_t>(std::stoul(value, nullptr, 16));
            else if (key == "images_path") ds.images_path = value;
            else if (key == "labels_path") ds.labels_path = value;
        } catch (const std::exception&) {
            throw input_error("malformed metadata entry '" + key + "' in " + path + ".meta");
        }
    }
    if (ds.grid_h < 1 || ds.grid_w < 1)
        throw input_error("dataset metadata missing grid size: " + path + ".meta");
    return ds;
}

}  // namespace kenn
