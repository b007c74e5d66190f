#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kenn/models.hpp"

namespace kenn {

// On-disk tensor container: magic "KENN", version u32, tensor count u32,
// then per tensor (name length u16, UTF-8 name, dtype u8 0=f32/1=f64,
// rank u8, dims u32 each, row-major little-endian data), and a trailing
// CRC32 over everything after the 8-byte prologue.
struct CheckpointTensor {
    std::string name;
    uint8_t dtype = 0;  // 0 = f32, 1 = f64
    std::vector<uint32_t> dims;
    std::vector<uint8_t> raw;  // row-major little-endian payload
};

void write_checkpoint_file(const std::string& path, const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> read_checkpoint_file(const std::string& path);

// Model round-trip. The architecture travels as an auxiliary "meta.arch"
// tensor inside the same container; parameters are stored f32.
void save_checkpoint(const Model<float>& model, const std::string& path);
Model<float> load_checkpoint(const std::string& path);

}  // namespace kenn
