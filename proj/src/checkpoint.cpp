#include "kenn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "kenn/crc32.hpp"
#include "kenn/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as raw little-endian words");

namespace kenn {

namespace {

constexpr char kMagic[4] = {'K', 'E', 'N', 'N'};
constexpr uint32_t kVersion = 1;

template <class T>
void append(std::vector<uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(const std::vector<uint8_t>& in, size_t& off, const std::string& path) {
    if (off + sizeof(T) > in.size()) throw input_error("truncated checkpoint: " + path);
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void write_checkpoint_file(const std::string& path, const std::vector<CheckpointTensor>& tensors) {
    std::vector<uint8_t> payload;
    append(payload, static_cast<uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > UINT16_MAX) throw input_error("checkpoint: tensor name too long");
        if (t.dims.size() > UINT8_MAX) throw input_error("checkpoint: tensor rank too large");
        append(payload, static_cast<uint16_t>(t.name.size()));
        payload.insert(payload.end(), t.name.begin(), t.name.end());
        append(payload, t.dtype);
        append(payload, static_cast<uint8_t>(t.dims.size()));
        for (uint32_t d : t.dims) append(payload, d);
        size_t numel = 1;
        for (uint32_t d : t.dims) numel *= d;
        const size_t elem = t.dtype == 0 ? 4 : 8;
        if (t.raw.size() != numel * elem)
            throw input_error("checkpoint: payload size mismatch for tensor '" + t.name + "'");
        payload.insert(payload.end(), t.raw.begin(), t.raw.end());
    }
    const uint32_t crc = crc32(payload.data(), payload.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), 4);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&crc), 4);
    if (!out) throw input_error("write failed for checkpoint: " + path);
}

std::vector<CheckpointTensor> read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw input_error("truncated checkpoint: " + path);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw input_error("bad magic in checkpoint: " + path);
    uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    if (version != kVersion)
        throw input_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    // Structure first (distinguishes truncation), then the CRC verdict.
    std::vector<uint8_t> payload(bytes.begin() + 8, bytes.end() - 4);
    size_t off = 0;
    const uint32_t count = take<uint32_t>(payload, off, path);
    std::vector<CheckpointTensor> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        const uint16_t name_len = take<uint16_t>(payload, off, path);
        if (off + name_len > payload.size()) throw input_error("truncated checkpoint: " + path);
        t.name.assign(reinterpret_cast<const char*>(payload.data() + off), name_len);
        off += name_len;
        t.dtype = take<uint8_t>(payload, off, path);
        if (t.dtype > 1) throw input_error("unknown dtype tag in checkpoint: " + path);
        const uint8_t rank = take<uint8_t>(payload, off, path);
        size_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            t.dims.push_back(take<uint32_t>(payload, off, path));
            numel *= t.dims.back();
        }
        const size_t nbytes = numel * (t.dtype == 0 ? 4 : 8);
        if (off + nbytes > payload.size()) throw input_error("truncated checkpoint: " + path);
        t.raw.assign(payload.begin() + static_cast<int64_t>(off),
                     payload.begin() + static_cast<int64_t>(off + nbytes));
        off += nbytes;
        tensors.push_back(std::move(t));
    }
    if (off != payload.size()) throw input_error("trailing bytes in checkpoint: " + path);

    uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32(payload.data(), payload.size()) != stored_crc)
        throw input_error("CRC mismatch in checkpoint: " + path);
    return tensors;
}

namespace {

constexpr char kMetaName[] = "meta.arch";

CheckpointTensor make_meta(const Model<float>& model) {
    const auto& c = model.config;
    std::vector<double> vals = {static_cast<double>(static_cast<int>(model.kind)),
                                static_cast<double>(c.in_h),
                                static_cast<double>(c.in_w),
                                static_cast<double>(c.conv_channels.size()),
                                0, 0, 0,
                                static_cast<double>(c.first_kernel),
                                static_cast<double>(c.fc1_dim),
                                static_cast<double>(c.feature_dim),
                                static_cast<double>(c.ode_steps)};
    for (size_t i = 0; i < c.conv_channels.size() && i < 3; ++i)
        vals[4 + i] = static_cast<double>(c.conv_channels[i]);
    CheckpointTensor t;
    t.name = kMetaName;
    t.dtype = 1;
    t.dims = {static_cast<uint32_t>(vals.size())};
    t.raw.resize(vals.size() * 8);
    std::memcpy(t.raw.data(), vals.data(), t.raw.size());
    return t;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
    std::vector<CheckpointTensor> tensors;
    tensors.push_back(make_meta(model));
    for (int i = 0; i < model.params.size(); ++i) {
        const auto& p = model.params[i];
        CheckpointTensor t;
        t.name = p.name;
        t.dtype = 0;
        for (int d : p.value.shape) t.dims.push_back(static_cast<uint32_t>(d));
        t.raw.resize(p.value.data.size() * 4);
        std::memcpy(t.raw.data(), p.value.data.data(), t.raw.size());
        tensors.push_back(std::move(t));
    }
    write_checkpoint_file(path, tensors);
}

Model<float> load_checkpoint(const std::string& path) {
    const auto tensors = read_checkpoint_file(path);
    const CheckpointTensor* meta = nullptr;
    for (const auto& t : tensors)
        if (t.name == kMetaName) meta = &t;
    if (!meta || meta->dtype != 1 || meta->dims.size() != 1 || meta->dims[0] != 11)
        throw input_error("checkpoint has no architecture record: " + path);
    std::vector<double> vals(11);
    std::memcpy(vals.data(), meta->raw.data(), meta->raw.size());

    ModelConfig cfg;
    const int kind_tag = static_cast<int>(vals[0]);
    if (kind_tag < 0 || kind_tag > 2)
        throw input_error("checkpoint has unknown model kind: " + path);
    cfg.in_h = static_cast<int>(vals[1]);
    cfg.in_w = static_cast<int>(vals[2]);
    const int n_conv = static_cast<int>(vals[3]);
    if (n_conv < 1 || n_conv > 3) throw input_error("checkpoint has bad conv stage count: " + path);
    cfg.conv_channels.clear();
    for (int i = 0; i < n_conv; ++i) cfg.conv_channels.push_back(static_cast<int>(vals[static_cast<size_t>(4 + i)]));
    cfg.first_kernel = static_cast<int>(vals[7]);
    cfg.fc1_dim = static_cast<int>(vals[8]);
    cfg.feature_dim = static_cast<int>(vals[9]);
    cfg.ode_steps = static_cast<int>(vals[10]);

    Model<float> model = make_model<float>(static_cast<ModelKind>(kind_tag), cfg, 0);
    for (int i = 0; i < model.params.size(); ++i) {
        auto& p = model.params[i];
        const CheckpointTensor* src = nullptr;
        for (const auto& t : tensors)
            if (t.name == p.name) src = &t;
        if (!src || src->dtype != 0)
            throw input_error("checkpoint missing parameter '" + p.name + "': " + path);
        std::vector<int> dims(src->dims.begin(), src->dims.end());
        if (dims != p.value.shape)
            throw input_error("checkpoint shape mismatch for '" + p.name + "': " + path);
        std::memcpy(p.value.data.data(), src->raw.data(), src->raw.size());
    }
    return model;
}

}  // namespace kenn
