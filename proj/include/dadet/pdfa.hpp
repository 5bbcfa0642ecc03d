#pragma once

// Prediction-discrepancy feedback for instance alignment: squared
// teacher-student disagreement per proposal, min-max normalized into weights,
// applied to the instance discriminator's BCE. Weights are plain values by
// construction — no gradient can flow back into their computation.

#include <vector>

#include "dadet/nn.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

// Elementwise (P_T - P_S)^2; shapes must match.
template <typename T>
Tensor<T> prediction_discrepancy(const Tensor<T>& p_t, const Tensor<T>& p_s) {
    if (p_t.shape != p_s.shape) throw ArgumentError("prediction_discrepancy: shape mismatch");
    Tensor<T> out(p_t.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        T d = p_t.data[i] - p_s.data[i];
        out.data[i] = d * d;
    }
    return out;
}

template <typename T>
struct InstanceWeights {
    std::vector<T> raw;        // row means of the discrepancy matrix
    std::vector<T> normalized; // min-max scaled to [0,1]; all ones when degenerate
    bool degenerate = false;
};

// Row mean over all C' columns, then (w - min) / (max - min). A constant raw
// vector has no signal to spread, so it falls back to uniform weights.
template <typename T>
InstanceWeights<T> instance_weights(const Tensor<T>& p_div) {
    const int n = p_div.dim(0), c = p_div.dim(1);
    if (n < 1) throw ArgumentError("instance_weights: empty discrepancy matrix");
    InstanceWeights<T> out;
    out.raw.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        T s = T(0);
        for (int j = 0; j < c; ++j) s += p_div.at(i, j);
        out.raw[static_cast<size_t>(i)] = s / static_cast<T>(c);
    }
    T lo = out.raw[0], hi = out.raw[0];
    for (T v : out.raw) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out.normalized.resize(static_cast<size_t>(n));
    if (hi > lo) {
        for (int i = 0; i < n; ++i)
            out.normalized[static_cast<size_t>(i)] = (out.raw[static_cast<size_t>(i)] - lo) / (hi - lo);
    } else {
        out.degenerate = true;
        std::fill(out.normalized.begin(), out.normalized.end(), T(1));
    }
    return out;
}

// BCE in probability space with the documented clamp on the value; the logit
// gradient stays the exact sigmoid(x) - d so saturated discriminators still
// steer the extractor.
template <typename T>
T adv_bce(T logit, T domain, T* dlogit, long* clamped) {
    constexpr T eps = T(1e-7);
    T p = nn::sigmoid(logit);
    if (dlogit) *dlogit = p - domain;
    if (p < eps || p > T(1) - eps) {
        p = std::min(std::max(p, eps), T(1) - eps);
        if (clamped) ++*clamped;
    }
    return -domain * std::log(p) - (T(1) - domain) * std::log(T(1) - p);
}

template <typename T>
struct InstanceAdvLoss {
    T loss = T(0);
    Tensor<T> dlogits;        // {N, 1}; hand to the discriminator's backward
    std::vector<T> per_instance;  // unweighted f_i, for diagnostics
    long clamped = 0;
};

// loss = ||w ⊙ f||_1 / N with f_i the per-instance domain BCE. d=1 source,
// d=0 target. Weights multiply both the value and the gradient.
template <typename T>
InstanceAdvLoss<T> instance_adversarial_loss(const Tensor<T>& logits, const std::vector<int>& flags,
                                             const std::vector<T>& weights) {
    const int n = logits.dim(0);
    if (static_cast<int>(flags.size()) != n || static_cast<int>(weights.size()) != n)
        throw ArgumentError("instance_adversarial_loss: length mismatch");
    InstanceAdvLoss<T> out;
    out.dlogits = Tensor<T>({n, 1});
    out.per_instance.resize(static_cast<size_t>(n));
    if (n == 0) return out;
    for (int i = 0; i < n; ++i) {
        T dl;
        T f = adv_bce(logits.at(i, 0), static_cast<T>(flags[static_cast<size_t>(i)]), &dl, &out.clamped);
        out.per_instance[static_cast<size_t>(i)] = f;
        out.loss += weights[static_cast<size_t>(i)] * f;
        out.dlogits.at(i, 0) = weights[static_cast<size_t>(i)] * dl / static_cast<T>(n);
    }
    out.loss /= static_cast<T>(n);
    return out;
}

}  // namespace dadet
