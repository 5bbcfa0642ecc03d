#pragma once

// Foreground-oriented image alignment: a binary mask rasterized from box
// unions at P2 resolution splits the feature map into complementary fg/bg
// parts, each scored by the image discriminator; the two BCE terms mix via the
// uncertainty factor gamma.

#include <cstdint>
#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/pdfa.hpp"  // adv_bce
#include "dadet/tensor.hpp"

namespace dadet {

struct ForegroundMask {
    std::vector<std::uint8_t> m;  // row-major {h, w}, 1 = foreground
    int h = 0, w = 0;
    bool from_pseudo = false;  // boxes came from pseudo labels rather than ground truth

    long popcount() const {
        long n = 0;
        for (auto v : m) n += v;
        return n;
    }
    bool empty_fg() const { return popcount() == 0; }
};

// Cell (i,j) is foreground iff its center — pixel ((j+0.5)·s2, (i+0.5)·s2) —
// lies inside at least one box (inclusive edges).
inline ForegroundMask build_mask(const std::vector<Box>& boxes, int img_w, int img_h, int s2,
                                 bool from_pseudo) {
    ForegroundMask mask;
    mask.h = (img_h + s2 - 1) / s2;
    mask.w = (img_w + s2 - 1) / s2;
    mask.from_pseudo = from_pseudo;
    mask.m.assign(static_cast<size_t>(mask.h) * mask.w, 0);
    for (int i = 0; i < mask.h; ++i) {
        float cy = (i + 0.5f) * s2;
        for (int j = 0; j < mask.w; ++j) {
            float cx = (j + 0.5f) * s2;
            for (const Box& b : boxes) {
                if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) {
                    mask.m[static_cast<size_t>(i) * mask.w + j] = 1;
                    break;
                }
            }
        }
    }
    return mask;
}

template <typename T>
struct SplitFeatures {
    Tensor<T> fg, bg;
};

// F_fg = M ⊙ F, F_bg = (1-M) ⊙ F, broadcast over channels. Exact additive
// decomposition since each cell lands wholly in one part.
template <typename T>
SplitFeatures<T> split_features(const Tensor<T>& fmap, const ForegroundMask& mask) {
    if (fmap.dim(1) != mask.h || fmap.dim(2) != mask.w)
        throw ArgumentError("split_features: mask/feature shape mismatch");
    SplitFeatures<T> out;
    out.fg = Tensor<T>(fmap.shape);
    out.bg = Tensor<T>(fmap.shape);
    const int c = fmap.dim(0);
    const size_t plane = static_cast<size_t>(mask.h) * mask.w;
    for (int ci = 0; ci < c; ++ci) {
        const T* src = &fmap.data[static_cast<size_t>(ci) * plane];
        T* fg = &out.fg.data[static_cast<size_t>(ci) * plane];
        T* bg = &out.bg.data[static_cast<size_t>(ci) * plane];
        for (size_t i = 0; i < plane; ++i) {
            if (mask.m[i])
                fg[i] = src[i];
            else
                bg[i] = src[i];
        }
    }
    return out;
}

// Restrict an upstream feature-map gradient to the masked (or complementary)
// cells — the backward of split_features for one branch.
template <typename T>
Tensor<T> mask_gradient(const Tensor<T>& dpart, const ForegroundMask& mask, bool foreground) {
    Tensor<T> out(dpart.shape);
    const int c = dpart.dim(0);
    const size_t plane = static_cast<size_t>(mask.h) * mask.w;
    for (int ci = 0; ci < c; ++ci) {
        const T* src = &dpart.data[static_cast<size_t>(ci) * plane];
        T* dst = &out.data[static_cast<size_t>(ci) * plane];
        for (size_t i = 0; i < plane; ++i)
            if ((mask.m[i] != 0) == foreground) dst[i] = src[i];
    }
    return out;
}

// L_img = γ·L_fg + (1-γ)·L_bg.
template <typename T>
T combine(T l_fg, T l_bg, T gamma) {
    if (!(gamma >= T(0) && gamma <= T(1))) throw ConfigError("combine: gamma outside [0,1]");
    return gamma * l_fg + (T(1) - gamma) * l_bg;
}

}  // namespace dadet
