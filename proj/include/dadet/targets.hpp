#pragma once

// Training-target assignment for RPN anchors and ROI-head proposals, plus the
// RPN loss (objectness BCE over a sampled anchor set, l1 on positive deltas).

#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/model.hpp"
#include "dadet/nn.hpp"
#include "dadet/rng.hpp"

namespace dadet {

struct RpnTargets {
    std::vector<int> anchor_idx;          // sampled anchors
    std::vector<int> labels;              // 1 fg / 0 bg, parallel to anchor_idx
    std::vector<BoxDelta> delta_targets;  // valid where label == 1
    int num_pos = 0;
};

// IoU >= pos_thresh (or per-GT argmax) -> positive, IoU < neg_thresh ->
// negative, rest ignored. Samples up to max_pos positives and fills with
// negatives to num_samples. With no GT every anchor is negative.
inline RpnTargets rpn_targets(const std::vector<Box>& anchors, const std::vector<Box>& gt, Rng& rng,
                              float pos_thresh = 0.7f, float neg_thresh = 0.3f, int num_samples = 64,
                              int max_pos = 32) {
    const int n = static_cast<int>(anchors.size());
    const int m = static_cast<int>(gt.size());
    std::vector<float> best_iou(static_cast<size_t>(n), 0.f);
    std::vector<int> best_gt(static_cast<size_t>(n), -1);
    std::vector<int> gt_best_anchor(static_cast<size_t>(m), -1);
    std::vector<float> gt_best_iou(static_cast<size_t>(m), 0.f);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            float v = iou(anchors[static_cast<size_t>(i)], gt[static_cast<size_t>(j)]);
            if (v > best_iou[static_cast<size_t>(i)]) {
                best_iou[static_cast<size_t>(i)] = v;
                best_gt[static_cast<size_t>(i)] = j;
            }
            if (v > gt_best_iou[static_cast<size_t>(j)]) {
                gt_best_iou[static_cast<size_t>(j)] = v;
                gt_best_anchor[static_cast<size_t>(j)] = i;
            }
        }
    }
    std::vector<int> pos, neg;
    std::vector<char> forced(static_cast<size_t>(n), 0);
    for (int j = 0; j < m; ++j)
        if (gt_best_anchor[static_cast<size_t>(j)] >= 0 && gt_best_iou[static_cast<size_t>(j)] > 0.f)
            forced[static_cast<size_t>(gt_best_anchor[static_cast<size_t>(j)])] = 1;
    for (int i = 0; i < n; ++i) {
        if (forced[static_cast<size_t>(i)] || best_iou[static_cast<size_t>(i)] >= pos_thresh)
            pos.push_back(i);
        else if (best_iou[static_cast<size_t>(i)] < neg_thresh)
            neg.push_back(i);
    }
    if (static_cast<int>(pos.size()) > max_pos) {
        rng.shuffle(pos);
        pos.resize(static_cast<size_t>(max_pos));
        std::sort(pos.begin(), pos.end());
    }
    int want_neg = num_samples - static_cast<int>(pos.size());
    if (static_cast<int>(neg.size()) > want_neg) {
        rng.shuffle(neg);
        neg.resize(static_cast<size_t>(std::max(0, want_neg)));
        std::sort(neg.begin(), neg.end());
    }
    RpnTargets out;
    for (int i : pos) {
        out.anchor_idx.push_back(i);
        out.labels.push_back(1);
        out.delta_targets.push_back(
            encode_delta(anchors[static_cast<size_t>(i)], gt[static_cast<size_t>(best_gt[static_cast<size_t>(i)])]));
        ++out.num_pos;
    }
    for (int i : neg) {
        out.anchor_idx.push_back(i);
        out.labels.push_back(0);
        out.delta_targets.push_back({});
    }
    return out;
}

struct RoiTargets {
    std::vector<int> labels;          // 0..C-1 foreground, C background
    std::vector<BoxDelta> deltas;     // valid where foreground
    std::vector<char> is_fg;
    int num_pos = 0;
};

inline RoiTargets roi_targets(const std::vector<Box>& rois, const std::vector<Box>& gt,
                              const std::vector<int>& gt_labels, int num_classes,
                              float fg_thresh = 0.5f) {
    RoiTargets out;
    const int n = static_cast<int>(rois.size());
    out.labels.assign(static_cast<size_t>(n), num_classes);
    out.deltas.assign(static_cast<size_t>(n), {});
    out.is_fg.assign(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        float best = 0.f;
        int best_j = -1;
        for (int j = 0; j < static_cast<int>(gt.size()); ++j) {
            float v = iou(rois[static_cast<size_t>(i)], gt[static_cast<size_t>(j)]);
            if (v > best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j >= 0 && best >= fg_thresh) {
            out.labels[static_cast<size_t>(i)] = gt_labels[static_cast<size_t>(best_j)];
            out.deltas[static_cast<size_t>(i)] = encode_delta(rois[static_cast<size_t>(i)], gt[static_cast<size_t>(best_j)]);
            out.is_fg[static_cast<size_t>(i)] = 1;
            ++out.num_pos;
        }
    }
    return out;
}

// GT (or pseudo) boxes first, then proposals by objectness, truncated to n and
// padded by cycling. Empty result only when there is nothing to cycle.
inline std::vector<Box> build_train_rois(const ProposalSet& props, const std::vector<Box>& gt, int n) {
    std::vector<Box> rois;
    rois.reserve(static_cast<size_t>(n));
    for (const Box& b : gt) {
        if (static_cast<int>(rois.size()) >= n) break;
        rois.push_back(b);
    }
    for (const Box& b : props.boxes) {
        if (static_cast<int>(rois.size()) >= n) break;
        rois.push_back(b);
    }
    if (rois.empty()) return rois;
    for (size_t i = 0; static_cast<int>(rois.size()) < n; ++i) rois.push_back(rois[i]);
    return rois;
}

template <typename T>
struct RpnLoss {
    T obj = T(0), reg = T(0);
    Tensor<T> dobj, ddelta;  // gradient maps, zero except at sampled anchors
};

template <typename T>
RpnLoss<T> rpn_loss(const RpnOut<T>& rpn, const RpnTargets& tgt, int num_anchors) {
    RpnLoss<T> out;
    out.dobj = Tensor<T>(rpn.obj_logits.shape);
    out.ddelta = Tensor<T>(rpn.deltas.shape);
    const int w2 = rpn.obj_logits.dim(2);
    const int n = static_cast<int>(tgt.anchor_idx.size());
    if (n == 0) return out;
    for (int s = 0; s < n; ++s) {
        int idx = tgt.anchor_idx[static_cast<size_t>(s)];
        int cell = idx / num_anchors, a = idx % num_anchors;
        int gy = cell / w2, gx = cell % w2;
        T dl;
        out.obj += nn::bce_logit(rpn.obj_logits.at(a, gy, gx),
                                 static_cast<T>(tgt.labels[static_cast<size_t>(s)]), &dl);
        out.dobj.at(a, gy, gx) += dl / static_cast<T>(n);
        if (tgt.labels[static_cast<size_t>(s)] == 1) {
            const BoxDelta& t = tgt.delta_targets[static_cast<size_t>(s)];
            const T tv[4] = {static_cast<T>(t.tx), static_cast<T>(t.ty), static_cast<T>(t.tw),
                             static_cast<T>(t.th)};
            for (int k = 0; k < 4; ++k) {
                T diff = rpn.deltas.at(a * 4 + k, gy, gx) - tv[k];
                out.reg += std::abs(diff) / static_cast<T>(tgt.num_pos);
                T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
                out.ddelta.at(a * 4 + k, gy, gx) += sgn / static_cast<T>(tgt.num_pos);
            }
        }
    }
    out.obj /= static_cast<T>(n);
    return out;
}

}  // namespace dadet
