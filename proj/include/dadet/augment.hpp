#pragma once

// Photometric augmentation. Weak = random contrast/brightness/saturation;
// strong adds a cutout-style erase on source images and grid block-masking on
// target images. No geometric transforms, so annotations are shared across
// views of the same scene.

#include "dadet/data.hpp"
#include "dadet/rng.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

struct AugmentParams {
    float contrast_amp = 0.35f;    // factor sampled in [1-a, 1+a]
    float brightness_amp = 0.15f;  // additive offset in [-a, a]
    float saturation_amp = 0.35f;  // factor sampled in [1-a, 1+a]
    // strong, source: rectangles erased to mid-gray
    int cutout_min = 1, cutout_max = 2;
    int cutout_min_side = 8, cutout_max_side = 24;
    // strong, target: block masking
    int block_px = 16;
    float mask_ratio = 0.3f;  // exactly round(ratio * cells) blocks zeroed

    static AugmentParams identity() {
        AugmentParams p;
        p.contrast_amp = 0.f;
        p.brightness_amp = 0.f;
        p.saturation_amp = 0.f;
        p.cutout_min = p.cutout_max = 0;
        p.mask_ratio = 0.f;
        return p;
    }
};

Tensor<float> weak_augment(const Tensor<float>& pixels, const AugmentParams& p, Rng& rng);
Tensor<float> strong_augment(const Tensor<float>& pixels, Domain domain, const AugmentParams& p,
                             Rng& rng);

}  // namespace dadet
