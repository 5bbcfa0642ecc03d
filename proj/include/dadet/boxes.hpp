#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dadet {

// Axis-aligned box in pixel coordinates, x1 < x2, y1 < y2.
struct Box {
    float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    float w() const { return x2 - x1; }
    float h() const { return y2 - y1; }
    float area() const { return std::max(0.f, w()) * std::max(0.f, h()); }
    float cx() const { return 0.5f * (x1 + x2); }
    float cy() const { return 0.5f * (y1 + y2); }
};

inline float iou(const Box& a, const Box& b) {
    float ax = a.area(), bx = b.area();
    if (ax <= 0.f || bx <= 0.f) return 0.f;  // degenerate box
    float ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
    float ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
    float iw = ix2 - ix1, ih = iy2 - iy1;
    if (iw <= 0.f || ih <= 0.f) return 0.f;
    float inter = iw * ih;
    return inter / (ax + bx - inter);
}

inline Box clip_box(const Box& b, int img_w, int img_h) {
    Box c;
    c.x1 = std::clamp(b.x1, 0.f, static_cast<float>(img_w));
    c.y1 = std::clamp(b.y1, 0.f, static_cast<float>(img_h));
    c.x2 = std::clamp(b.x2, 0.f, static_cast<float>(img_w));
    c.y2 = std::clamp(b.y2, 0.f, static_cast<float>(img_h));
    return c;
}

// Greedy NMS over score-sorted boxes; returns indices of survivors in
// descending score order. Ties broken by lower index for determinism.
inline std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<float>& scores,
                            float iou_thresh) {
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]; });
    std::vector<int> keep;
    std::vector<bool> suppressed(boxes.size(), false);
    for (int idx : order) {
        if (suppressed[static_cast<size_t>(idx)]) continue;
        keep.push_back(idx);
        for (int other : order) {
            if (other == idx || suppressed[static_cast<size_t>(other)]) continue;
            if (iou(boxes[static_cast<size_t>(idx)], boxes[static_cast<size_t>(other)]) > iou_thresh)
                suppressed[static_cast<size_t>(other)] = true;
        }
    }
    return keep;
}

// Faster R-CNN style box deltas (tx, ty, tw, th) relative to a reference box.
struct BoxDelta {
    float tx = 0, ty = 0, tw = 0, th = 0;
};

inline BoxDelta encode_delta(const Box& ref, const Box& target) {
    float rw = std::max(ref.w(), 1.f), rh = std::max(ref.h(), 1.f);
    BoxDelta d;
    d.tx = (target.cx() - ref.cx()) / rw;
    d.ty = (target.cy() - ref.cy()) / rh;
    d.tw = std::log(std::max(target.w(), 1.f) / rw);
    d.th = std::log(std::max(target.h(), 1.f) / rh);
    return d;
}

inline Box decode_delta(const Box& ref, const BoxDelta& d) {
    float rw = std::max(ref.w(), 1.f), rh = std::max(ref.h(), 1.f);
    float cx = ref.cx() + d.tx * rw;
    float cy = ref.cy() + d.ty * rh;
    // clamp exp argument so an untrained head cannot overflow
    float w = rw * std::exp(std::clamp(d.tw, -4.f, 4.f));
    float h = rh * std::exp(std::clamp(d.th, -4.f, 4.f));
    return Box{cx - 0.5f * w, cy - 0.5f * h, cx + 0.5f * w, cy + 0.5f * h};
}

// One anchor box per (cell, size, ratio) on a stride-s grid.
inline std::vector<Box> make_anchors(int grid_h, int grid_w, int stride,
                                     const std::vector<float>& sizes,
                                     const std::vector<float>& ratios) {
    std::vector<Box> anchors;
    anchors.reserve(static_cast<size_t>(grid_h) * grid_w * sizes.size() * ratios.size());
    for (int gy = 0; gy < grid_h; ++gy) {
        for (int gx = 0; gx < grid_w; ++gx) {
            float cx = (gx + 0.5f) * stride;
            float cy = (gy + 0.5f) * stride;
            for (float size : sizes) {
                for (float ratio : ratios) {
                    // ratio = h / w at constant area
                    float w = size / std::sqrt(ratio);
                    float h = size * std::sqrt(ratio);
                    anchors.push_back(Box{cx - 0.5f * w, cy - 0.5f * h, cx + 0.5f * w, cy + 0.5f * h});
                }
            }
        }
    }
    return anchors;
}

}  // namespace dadet
