#pragma once

// Deterministic MNIST-like digit corpus for tests: 5x7 glyphs scaled onto a
// 28x28 canvas with translation jitter, stroke/intensity variation and a
// soft blur. Class structure and within-class translations give the W2
// distribution the pipeline expects from handwritten-digit data.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kenn/data_pipeline.hpp"
#include "kenn/rng.hpp"

namespace kenn::synth {

inline const std::array<std::array<const char*, 7>, 10>& glyphs() {
    static const std::array<std::array<const char*, 7>, 10> g = {{
        {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
        {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
        {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},  // 2
        {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},  // 3
        {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
        {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
        {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
        {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
        {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
        {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
    }};
    return g;
}

// One 28x28 digit image. jitter_px = 0 gives the centered canonical form.
inline std::vector<uint8_t> render_digit(int digit, Rng& rng, int jitter_px = 3) {
    constexpr int kSide = 28, kScale = 2, kGw = 5, kGh = 7;
    const int block_w = kGw * kScale, block_h = kGh * kScale;

    // stroke variation: sometimes thicken the glyph to the right
    std::array<std::array<bool, kGw>, kGh> bits{};
    const bool thick = rng.uniform() < 0.35;
    for (int r = 0; r < kGh; ++r)
        for (int c = 0; c < kGw; ++c) {
            bool on = glyphs()[static_cast<size_t>(digit)][static_cast<size_t>(r)][c] == '1';
            if (thick && c > 0 &&
                glyphs()[static_cast<size_t>(digit)][static_cast<size_t>(r)][c - 1] == '1')
                on = true;
            bits[static_cast<size_t>(r)][static_cast<size_t>(c)] = on;
        }

    const int top = (kSide - block_h) / 2 +
                    static_cast<int>(jitter_px ? rng.uniform_int(-jitter_px, jitter_px) : 0);
    const int left = (kSide - block_w) / 2 +
                     static_cast<int>(jitter_px ? rng.uniform_int(-jitter_px, jitter_px) : 0);

    std::vector<double> canvas(kSide * kSide, 0.0);
    for (int r = 0; r < kGh; ++r)
        for (int c = 0; c < kGw; ++c) {
            if (!bits[static_cast<size_t>(r)][static_cast<size_t>(c)]) continue;
            const double v = 140.0 + static_cast<double>(rng.uniform_int(0, 100));
            for (int dy = 0; dy < kScale; ++dy)
                for (int dx = 0; dx < kScale; ++dx) {
                    const int y = top + r * kScale + dy, x = left + c * kScale + dx;
                    if (y >= 0 && y < kSide && x >= 0 && x < kSide)
                        canvas[static_cast<size_t>(y) * kSide + x] = v;
                }
        }

    // one 3x3 box blur pass for soft edges
    std::vector<double> blurred(kSide * kSide, 0.0);
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
            double acc = 0.0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= kSide || xx < 0 || xx >= kSide) continue;
                    acc += canvas[static_cast<size_t>(yy) * kSide + xx];
                    ++cnt;
                }
            blurred[static_cast<size_t>(y) * kSide + x] = acc / cnt;
        }

    // faint halo pixels dropped: keeps the support size MNIST-like
    std::vector<uint8_t> out(kSide * kSide);
    for (size_t i = 0; i < out.size(); ++i) {
        const double val = blurred[i] < 14.0 ? 0.0 : blurred[i];
        out[i] = static_cast<uint8_t>(std::clamp(val, 0.0, 255.0));
    }
    return out;
}

// per_class images of each digit class, labels[i] = i % 10.
inline std::pair<ImageSet, std::vector<uint8_t>> make_corpus(int per_class, uint64_t seed,
                                                             int jitter_px = 3) {
    ImageSet set;
    set.count = per_class * 10;
    set.height = 28;
    set.width = 28;
    set.pixels.resize(static_cast<size_t>(set.count) * 28 * 28);
    std::vector<uint8_t> labels(static_cast<size_t>(set.count));
    for (int i = 0; i < set.count; ++i) {
        const int digit = i % 10;
        Rng rng(mix_seed(seed, 0xD161ull * 1000 + static_cast<uint64_t>(i)));
        const auto img = render_digit(digit, rng, jitter_px);
        std::copy(img.begin(), img.end(), set.pixels.begin() + static_cast<int64_t>(i) * 28 * 28);
        labels[static_cast<size_t>(i)] = static_cast<uint8_t>(digit);
    }
    return {std::move(set), std::move(labels)};
}

// 2x2 block average; 28x28 -> 14x14.
inline ImageSet downscale2x(const ImageSet& in) {
    ImageSet out;
    out.count = in.count;
    out.height = in.height / 2;
    out.width = in.width / 2;
    out.pixels.resize(static_cast<size_t>(out.count) * out.height * out.width);
    for (int i = 0; i < in.count; ++i) {
        const uint8_t* src = in.image(i);
        uint8_t* dst = out.pixels.data() + static_cast<int64_t>(i) * out.height * out.width;
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const int sum = src[(2 * y) * in.width + 2 * x] + src[(2 * y) * in.width + 2 * x + 1] +
                                src[(2 * y + 1) * in.width + 2 * x] +
                                src[(2 * y + 1) * in.width + 2 * x + 1];
                dst[y * out.width + x] = static_cast<uint8_t>(sum / 4);
            }
    }
    return out;
}

// Rigid integer translation; throws if any mass would be clipped.
inline std::vector<uint8_t> translate_image(const uint8_t* img, int h, int w, int dr, int dc) {
    std::vector<uint8_t> out(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const uint8_t v = img[y * w + x];
            if (v == 0) continue;
            const int yy = y + dr, xx = x + dc;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w)
                throw std::runtime_error("translate_image: translation clips mass");
            out[static_cast<size_t>(yy) * w + xx] = v;
        }
    return out;
}

}  // namespace kenn::synth
