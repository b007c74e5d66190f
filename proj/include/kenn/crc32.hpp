#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace kenn {

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
class Crc32 {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        uint32_t c = ~crc_;
        for (size_t i = 0; i < len; ++i)
            c = table()[(c ^ p[i]) & 0xff] ^ (c >> 8);
        crc_ = ~c;
    }

    uint32_t value() const { return crc_; }

private:
    static const std::array<uint32_t, 256>& table() {
        static const std::array<uint32_t, 256> t = [] {
            std::array<uint32_t, 256> tbl{};
            for (uint32_t i = 0; i < 256; ++i) {
                uint32_t c = i;
                for (int k = 0; k < 8; ++k)
                    c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
                tbl[i] = c;
            }
            return tbl;
        }();
        return t;
    }

    uint32_t crc_ = 0;
};

inline uint32_t crc32(const void* data, size_t len) {
    Crc32 c;
    c.update(data, len);
    return c.value();
}

}  // namespace kenn
