#include "dadet/augment.hpp"

#include <algorithm>
#include <cmath>

namespace dadet {

namespace {

float luminance(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void clamp01(Tensor<float>& t) {
    for (auto& v : t.data) v = std::min(1.f, std::max(0.f, v));
}

}  // namespace

Tensor<float> weak_augment(const Tensor<float>& pixels, const AugmentParams& p, Rng& rng) {
    const int h = pixels.dim(1), w = pixels.dim(2);
    Tensor<float> out = pixels;

    // contrast about the mean luminance
    float c = static_cast<float>(rng.uniform(1.0 - p.contrast_amp, 1.0 + p.contrast_amp));
    double mean = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            mean += luminance(out.at(0, y, x), out.at(1, y, x), out.at(2, y, x));
    float m = static_cast<float>(mean / (static_cast<double>(h) * w));
    for (auto& v : out.data) v = m + c * (v - m);

    // additive brightness
    float b = static_cast<float>(rng.uniform(-p.brightness_amp, p.brightness_amp));
    for (auto& v : out.data) v += b;

    // saturation: blend with per-pixel gray
    float s = static_cast<float>(rng.uniform(1.0 - p.saturation_amp, 1.0 + p.saturation_amp));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float gray = luminance(out.at(0, y, x), out.at(1, y, x), out.at(2, y, x));
            for (int ch = 0; ch < 3; ++ch)
                out.at(ch, y, x) = gray + s * (out.at(ch, y, x) - gray);
        }
    }

    clamp01(out);
    return out;
}

Tensor<float> strong_augment(const Tensor<float>& pixels, Domain domain, const AugmentParams& p,
                             Rng& rng) {
    Tensor<float> out = weak_augment(pixels, p, rng);
    const int h = out.dim(1), w = out.dim(2);

    if (domain == Domain::source) {
        // cutout: a few mid-gray rectangles
        int n = p.cutout_max > 0 ? rng.uniform_int(p.cutout_min, p.cutout_max) : 0;
        for (int k = 0; k < n; ++k) {
            int rw = rng.uniform_int(p.cutout_min_side, p.cutout_max_side);
            int rh = rng.uniform_int(p.cutout_min_side, p.cutout_max_side);
            int x0 = rng.uniform_int(0, std::max(0, w - rw));
            int y0 = rng.uniform_int(0, std::max(0, h - rh));
            for (int y = y0; y < std::min(h, y0 + rh); ++y)
                for (int x = x0; x < std::min(w, x0 + rw); ++x)
                    for (int c = 0; c < 3; ++c) out.at(c, y, x) = 0.5f;
        }
    } else {
        // grid block-masking: exactly round(ratio * cells) blocks zeroed
        const int bp = p.block_px;
        const int gh = (h + bp - 1) / bp, gw = (w + bp - 1) / bp;
        const int cells = gh * gw;
        int zero_count = static_cast<int>(std::lround(static_cast<double>(p.mask_ratio) * cells));
        std::vector<int> order(static_cast<size_t>(cells));
        for (int i = 0; i < cells; ++i) order[static_cast<size_t>(i)] = i;
        rng.shuffle(order);
        for (int k = 0; k < zero_count; ++k) {
            int cell = order[static_cast<size_t>(k)];
            int cy = cell / gw, cx = cell % gw;
            for (int y = cy * bp; y < std::min(h, (cy + 1) * bp); ++y)
                for (int x = cx * bp; x < std::min(w, (cx + 1) * bp); ++x)
                    for (int c = 0; c < 3; ++c) out.at(c, y, x) = 0.f;
        }
    }
    return out;
}

}  // namespace dadet
