#pragma once

// The overall min-max objective: detection losses (cross-entropy +
// l1 regression, shared by the supervised and pseudo-label paths) and the
// λ-scaled adversarial terms, wired through a gradient reversal boundary so a
// single optimizer pass updates both players.

#include <string>
#include <vector>

#include "dadet/common.hpp"
#include "dadet/nn.hpp"
#include "dadet/targets.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

template <typename T>
struct LossBundle {
    T sup = T(0);
    T unsup = T(0);
    T adv_ins = T(0);
    T adv_img = T(0);
    T total = T(0);
};

// total = sup + unsup + λ(adv_ins + adv_img); any non-finite component aborts.
template <typename T>
LossBundle<T> total_objective(T sup, T unsup, T adv_ins, T adv_img, T lambda) {
    auto check = [](T v, const char* name) {
        if (!std::isfinite(v))
            throw NanAbort(std::string("non-finite loss component: ") + name, name);
    };
    check(sup, "sup");
    check(unsup, "unsup");
    check(adv_ins, "adv_ins");
    check(adv_img, "adv_img");
    LossBundle<T> out;
    out.sup = sup;
    out.unsup = unsup;
    out.adv_ins = adv_ins;
    out.adv_img = adv_img;
    out.total = sup + unsup + lambda * (adv_ins + adv_img);
    return out;
}

// Gradient reversal: identity forward, -λ· backward. The forward is spelled
// out so the boundary is a named, testable operation rather than a convention.
template <typename T>
Tensor<T> gradient_reversal(const Tensor<T>& x) {
    return x;
}

template <typename T>
Tensor<T> gradient_reversal_backward(const Tensor<T>& dy, T lambda) {
    Tensor<T> out(dy.shape);
    for (size_t i = 0; i < dy.data.size(); ++i) out.data[i] = -lambda * dy.data[i];
    return out;
}

template <typename T>
struct DetectionLoss {
    T cls = T(0), reg = T(0);
    Tensor<T> dcls_logits, dbox_deltas;
    bool vacuous = false;  // nothing matched / nothing to supervise
};

// CE over all rois (background is a real class column) plus l1 over the
// foreground rois' box deltas, summed per box and averaged over positives.
// Used verbatim for both the supervised (ground-truth) and unsupervised
// (pseudo-label) paths.
template <typename T>
DetectionLoss<T> detection_loss(const Tensor<T>& cls_logits, const Tensor<T>& box_deltas,
                                const RoiTargets& tgt) {
    DetectionLoss<T> out;
    const int n = cls_logits.dim(0);
    out.dcls_logits = Tensor<T>(cls_logits.shape);
    out.dbox_deltas = Tensor<T>(box_deltas.shape);
    if (n == 0) {
        out.vacuous = true;
        return out;
    }
    out.cls = nn::softmax_ce(cls_logits, tgt.labels, &out.dcls_logits);
    if (tgt.num_pos > 0) {
        for (int i = 0; i < n; ++i) {
            if (!tgt.is_fg[static_cast<size_t>(i)]) continue;
            const BoxDelta& t = tgt.deltas[static_cast<size_t>(i)];
            const T tv[4] = {static_cast<T>(t.tx), static_cast<T>(t.ty), static_cast<T>(t.tw),
                             static_cast<T>(t.th)};
            for (int k = 0; k < 4; ++k) {
                T diff = box_deltas.at(i, k) - tv[k];
                out.reg += std::abs(diff) / static_cast<T>(tgt.num_pos);
                T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
                out.dbox_deltas.at(i, k) = sgn / static_cast<T>(tgt.num_pos);
            }
        }
    }
    return out;
}

template <typename T>
T detection_loss_value(const DetectionLoss<T>& l) {
    return l.cls + l.reg;
}

}  // namespace dadet
