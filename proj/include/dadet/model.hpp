#pragma once

// The miniature two-stage detector: 4-stage strided conv backbone, FPN-style
// pyramid with P2 as the finest level, single-level RPN, bilinear ROI
// extraction and a small ROI head. Parameters live in a ParamStore; every
// forward takes an optional context so eval passes skip the bookkeeping.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/nn.hpp"
#include "dadet/params.hpp"

namespace dadet {

struct DetectorCfg {
    int in_ch = 3;
    int stage_ch[4] = {16, 32, 64, 64};
    int fpn_ch = 24;
    int s2 = 4;  // stride of P2
    int rpn_ch = 16;
    std::vector<float> anchor_sizes = {12.f, 24.f, 40.f};
    std::vector<float> anchor_ratios = {0.5f, 1.f, 2.f};
    int roi_grid = 4;
    int fc_dim = 96;
    int num_classes = 3;  // foreground classes; the head adds a background column

    int num_anchors() const { return static_cast<int>(anchor_sizes.size() * anchor_ratios.size()); }
    int roi_feat_dim() const { return roi_grid * roi_grid * fpn_ch; }
    int num_columns() const { return num_classes + 1; }
};

template <typename T>
struct Pyramid {
    Tensor<T> p2, p3, p4;  // strides s2, 2*s2, 4*s2
    int img_h = 0, img_w = 0;
};

struct ProposalSet {
    std::vector<Box> boxes;        // clipped to image bounds, descending objectness
    std::vector<float> objectness;
};

struct Detections {
    std::vector<Box> boxes;
    std::vector<int> labels;   // foreground classes only
    std::vector<float> scores;
};

// ---------------------------------------------------------------------------
// contexts
// ---------------------------------------------------------------------------

template <typename T>
struct BackboneCtx {
    nn::ConvCtx<T> conv[4];
    nn::ReluCtx<T> relu[4];
    nn::ConvCtx<T> lat[3];  // laterals for stages 2..4
    int stage_h[4] = {0, 0, 0, 0}, stage_w[4] = {0, 0, 0, 0};
};

template <typename T>
struct RpnCtx {
    nn::ConvCtx<T> conv;
    nn::ReluCtx<T> relu;
    nn::ConvCtx<T> obj, delta;
};

template <typename T>
struct RpnOut {
    Tensor<T> obj_logits;  // {A, H2, W2}
    Tensor<T> deltas;      // {4A, H2, W2}
};

template <typename T>
struct RoiAlignCtx {
    std::vector<Box> rois;  // P2 coordinates
    int p2_h = 0, p2_w = 0;
    long degenerate_rois = 0;
};

template <typename T>
struct RoiHeadCtx {
    nn::LinearCtx<T> fc;
    nn::ReluCtx<T> relu;
    nn::LinearCtx<T> cls, box;
};

template <typename T>
struct RoiHeadOut {
    Tensor<T> features;    // F_ins, {N, fc_dim}
    Tensor<T> cls_logits;  // {N, C+1}
    Tensor<T> cls_probs;   // row-stochastic
    Tensor<T> box_deltas;  // {N, 4}
};

// ---------------------------------------------------------------------------

template <typename T>
class Detector {
public:
    DetectorCfg cfg;

    explicit Detector(DetectorCfg c = {}) : cfg(c) {}

    // Adds all detector parameters to the store (He init for features,
    // small-std init for prediction heads, zero biases).
    void build_params(ParamStore<T>& store, Rng& rng) const {
        auto conv = [&](const std::string& name, int out_c, int in_c, int k, bool head = false) {
            Tensor<T> w({out_c, in_c * k * k});
            if (head)
                init_head_weight(w, rng);
            else
                init_weight(w, in_c * k * k, rng);
            store.add(name + ".w", std::move(w));
            store.add(name + ".b", Tensor<T>({out_c}));
        };
        auto fc = [&](const std::string& name, int out, int in, bool head = false) {
            Tensor<T> w({out, in});
            if (head)
                init_head_weight(w, rng);
            else
                init_weight(w, in, rng);
            store.add(name + ".w", std::move(w));
            store.add(name + ".b", Tensor<T>({out}));
        };
        int prev = cfg.in_ch;
        for (int i = 0; i < 4; ++i) {
            conv("backbone.conv" + std::to_string(i + 1), cfg.stage_ch[i], prev, 3);
            prev = cfg.stage_ch[i];
        }
        conv("fpn.lat2", cfg.fpn_ch, cfg.stage_ch[1], 1);
        conv("fpn.lat3", cfg.fpn_ch, cfg.stage_ch[2], 1);
        conv("fpn.lat4", cfg.fpn_ch, cfg.stage_ch[3], 1);
        conv("rpn.conv", cfg.rpn_ch, cfg.fpn_ch, 3);
        conv("rpn.obj", cfg.num_anchors(), cfg.rpn_ch, 1, true);
        conv("rpn.delta", cfg.num_anchors() * 4, cfg.rpn_ch, 1, true);
        fc("roi.fc", cfg.fc_dim, cfg.roi_feat_dim());
        fc("roi.cls", cfg.num_columns(), cfg.fc_dim, true);
        fc("roi.box", 4, cfg.fc_dim, true);
    }

    // ---- backbone + pyramid ----

    Pyramid<T> backbone_forward(const ParamStore<T>& ps, const Tensor<T>& image,
                                BackboneCtx<T>* ctx) const {
        if (!image.all_finite()) throw ArgumentError("backbone_forward: non-finite input");
        Pyramid<T> pyr;
        pyr.img_h = image.dim(1);
        pyr.img_w = image.dim(2);
        Tensor<T> x = image;
        Tensor<T> stage_out[4];
        for (int i = 0; i < 4; ++i) {
            std::string n = "backbone.conv" + std::to_string(i + 1);
            auto y = nn::conv2d_forward(x, ps.tensor(n + ".w"), ps.tensor(n + ".b"), 3, 2, 1,
                                        ctx ? &ctx->conv[i] : nullptr);
            x = nn::relu_forward(y, ctx ? &ctx->relu[i] : nullptr);
            if (ctx) {
                ctx->stage_h[i] = x.dim(1);
                ctx->stage_w[i] = x.dim(2);
            }
            stage_out[i] = x;
        }
        pyr.p4 = nn::conv2d_forward(stage_out[3], ps.tensor("fpn.lat4.w"), ps.tensor("fpn.lat4.b"),
                                    1, 1, 0, ctx ? &ctx->lat[2] : nullptr);
        auto l3 = nn::conv2d_forward(stage_out[2], ps.tensor("fpn.lat3.w"), ps.tensor("fpn.lat3.b"),
                                     1, 1, 0, ctx ? &ctx->lat[1] : nullptr);
        auto up4 = nn::upsample2_forward(pyr.p4, l3.dim(1), l3.dim(2));
        pyr.p3 = l3;
        for (size_t i = 0; i < pyr.p3.data.size(); ++i) pyr.p3.data[i] += up4.data[i];
        auto l2 = nn::conv2d_forward(stage_out[1], ps.tensor("fpn.lat2.w"), ps.tensor("fpn.lat2.b"),
                                     1, 1, 0, ctx ? &ctx->lat[0] : nullptr);
        auto up3 = nn::upsample2_forward(pyr.p3, l2.dim(1), l2.dim(2));
        pyr.p2 = l2;
        for (size_t i = 0; i < pyr.p2.data.size(); ++i) pyr.p2.data[i] += up3.data[i];
        return pyr;
    }

    // dp2 is consumed; gradients land in gs. skip_stage1 skips conv1 entirely
    // (it is frozen after burn-in and is the input layer, so nothing upstream
    // needs its dx).
    void backbone_backward(const ParamStore<T>& ps, const BackboneCtx<T>& ctx, const Tensor<T>& dp2,
                           GradStore<T>& gs, bool skip_stage1 = false) const {
        auto gw = [&](const std::string& n) -> Tensor<T>& { return gs[ps.find(n)]; };

        // lateral 2 and the top-down chain
        Tensor<T> da[4];
        nn::conv2d_backward(ctx.lat[0], ps.tensor("fpn.lat2.w"), dp2, gw("fpn.lat2.w"),
                            gw("fpn.lat2.b"), &da[1]);
        Tensor<T> dp3 = nn::upsample2_backward(dp2, ctx.stage_h[2], ctx.stage_w[2]);
        nn::conv2d_backward(ctx.lat[1], ps.tensor("fpn.lat3.w"), dp3, gw("fpn.lat3.w"), gw("fpn.lat3.b"),
                            &da[2]);
        Tensor<T> dp4 = nn::upsample2_backward(dp3, ctx.stage_h[3], ctx.stage_w[3]);
        nn::conv2d_backward(ctx.lat[2], ps.tensor("fpn.lat4.w"), dp4, gw("fpn.lat4.w"), gw("fpn.lat4.b"),
                            &da[3]);

        // stage chain, top down
        for (int i = 3; i >= 0; --i) {
            if (skip_stage1 && i == 0) break;
            std::string n = "backbone.conv" + std::to_string(i + 1);
            Tensor<T> dpre = nn::relu_backward(ctx.relu[i], da[i]);
            Tensor<T> dx;
            nn::conv2d_backward(ctx.conv[i], ps.tensor(n + ".w"), dpre, gw(n + ".w"), gw(n + ".b"),
                                i > 0 ? &dx : nullptr);
            if (i > 0) {
                // da[0] has no lateral contribution, so the first write seeds it.
                if (da[i - 1].data.empty())
                    da[i - 1] = std::move(dx);
                else
                    for (size_t j = 0; j < da[i - 1].data.size(); ++j)
                        da[i - 1].data[j] += dx.data[j];
            }
        }
    }

    // ---- RPN ----

    RpnOut<T> rpn_forward(const ParamStore<T>& ps, const Tensor<T>& p2, RpnCtx<T>* ctx) const {
        RpnOut<T> out;
        auto h = nn::conv2d_forward(p2, ps.tensor("rpn.conv.w"), ps.tensor("rpn.conv.b"), 3, 1, 1,
                                    ctx ? &ctx->conv : nullptr);
        h = nn::relu_forward(h, ctx ? &ctx->relu : nullptr);
        out.obj_logits = nn::conv2d_forward(h, ps.tensor("rpn.obj.w"), ps.tensor("rpn.obj.b"), 1, 1, 0,
                                            ctx ? &ctx->obj : nullptr);
        out.deltas = nn::conv2d_forward(h, ps.tensor("rpn.delta.w"), ps.tensor("rpn.delta.b"), 1, 1, 0,
                                        ctx ? &ctx->delta : nullptr);
        return out;
    }

    // Returns this image's dP2 contribution.
    Tensor<T> rpn_backward(const ParamStore<T>& ps, const RpnCtx<T>& ctx, const Tensor<T>& dobj,
                           const Tensor<T>& ddelta, GradStore<T>& gs) const {
        Tensor<T> dh1({0}), dh2({0});
        nn::conv2d_backward(ctx.obj, ps.tensor("rpn.obj.w"), dobj, gs[ps.find("rpn.obj.w")],
                            gs[ps.find("rpn.obj.b")], &dh1);
        nn::conv2d_backward(ctx.delta, ps.tensor("rpn.delta.w"), ddelta, gs[ps.find("rpn.delta.w")],
                            gs[ps.find("rpn.delta.b")], &dh2);
        for (size_t i = 0; i < dh1.data.size(); ++i) dh1.data[i] += dh2.data[i];
        Tensor<T> dpre = nn::relu_backward(ctx.relu, dh1);
        Tensor<T> dp2;
        nn::conv2d_backward(ctx.conv, ps.tensor("rpn.conv.w"), dpre, gs[ps.find("rpn.conv.w")],
                            gs[ps.find("rpn.conv.b")], &dp2);
        return dp2;
    }

    std::vector<Box> anchors_for(int h2, int w2) const {
        return make_anchors(h2, w2, cfg.s2, cfg.anchor_sizes, cfg.anchor_ratios);
    }

    // Decode + clip + top-k + NMS. Proposals come back sorted by objectness.
    ProposalSet propose(const RpnOut<T>& rpn, int img_h, int img_w, int k_max, float nms_thresh,
                        int pre_nms = 256) const {
        const int a_count = cfg.num_anchors();
        const int h2 = rpn.obj_logits.dim(1), w2 = rpn.obj_logits.dim(2);
        auto anchors = anchors_for(h2, w2);
        const long total = static_cast<long>(anchors.size());
        std::vector<int> order(static_cast<size_t>(total));
        std::iota(order.begin(), order.end(), 0);
        auto score_of = [&](int idx) {
            int cell = idx / a_count, a = idx % a_count;
            int gy = cell / w2, gx = cell % w2;
            return static_cast<float>(rpn.obj_logits.at(a, gy, gx));
        };
        std::stable_sort(order.begin(), order.end(),
                         [&](int l, int r) { return score_of(l) > score_of(r); });
        if (static_cast<long>(order.size()) > pre_nms) order.resize(static_cast<size_t>(pre_nms));

        std::vector<Box> cand;
        std::vector<float> cand_scores;
        for (int idx : order) {
            int cell = idx / a_count, a = idx % a_count;
            int gy = cell / w2, gx = cell % w2;
            BoxDelta d{static_cast<float>(rpn.deltas.at(a * 4 + 0, gy, gx)),
                       static_cast<float>(rpn.deltas.at(a * 4 + 1, gy, gx)),
                       static_cast<float>(rpn.deltas.at(a * 4 + 2, gy, gx)),
                       static_cast<float>(rpn.deltas.at(a * 4 + 3, gy, gx))};
            Box b = clip_box(decode_delta(anchors[static_cast<size_t>(idx)], d), img_w, img_h);
            if (b.w() < 1.f || b.h() < 1.f) continue;
            cand.push_back(b);
            cand_scores.push_back(nn::sigmoid(score_of(idx)));
        }
        auto keep = nms(cand, cand_scores, nms_thresh);
        ProposalSet out;
        for (int idx : keep) {
            if (static_cast<int>(out.boxes.size()) >= k_max) break;
            out.boxes.push_back(cand[static_cast<size_t>(idx)]);
            out.objectness.push_back(cand_scores[static_cast<size_t>(idx)]);
        }
        return out;
    }

    // ---- ROI feature extraction (bilinear, fixed grid) ----

    Tensor<T> roi_align(const Tensor<T>& p2, const std::vector<Box>& boxes_px,
                        RoiAlignCtx<T>* ctx) const {
        const int g = cfg.roi_grid, c = p2.dim(0), h = p2.dim(1), w = p2.dim(2);
        const int n = static_cast<int>(boxes_px.size());
        Tensor<T> out({n, g * g * c});
        std::vector<Box> rois(boxes_px.size());
        long degenerate = 0;
        for (int i = 0; i < n; ++i) {
            const Box& bp = boxes_px[static_cast<size_t>(i)];
            Box r{bp.x1 / cfg.s2, bp.y1 / cfg.s2, bp.x2 / cfg.s2, bp.y2 / cfg.s2};
            rois[static_cast<size_t>(i)] = r;
            bool degen = r.w() <= 0.f || r.h() <= 0.f;
            if (degen) ++degenerate;
            for (int gy = 0; gy < g; ++gy) {
                for (int gx = 0; gx < g; ++gx) {
                    float px, py;
                    if (degen) {
                        px = r.cx();
                        py = r.cy();
                    } else {
                        px = r.x1 + (gx + 0.5f) * r.w() / g;
                        py = r.y1 + (gy + 0.5f) * r.h() / g;
                    }
                    int x0, y0;
                    T fx, fy;
                    bilinear_setup(px, w, x0, fx);
                    bilinear_setup(py, h, y0, fy);
                    int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                    T w00 = (T(1) - fy) * (T(1) - fx), w01 = (T(1) - fy) * fx;
                    T w10 = fy * (T(1) - fx), w11 = fy * fx;
                    for (int ci = 0; ci < c; ++ci) {
                        T v = w00 * p2.at(ci, y0, x0) + w01 * p2.at(ci, y0, x1) +
                              w10 * p2.at(ci, y1, x0) + w11 * p2.at(ci, y1, x1);
                        out.at(i, (gy * g + gx) * c + ci) = v;
                    }
                }
            }
        }
        if (ctx) {
            ctx->rois = std::move(rois);
            ctx->p2_h = h;
            ctx->p2_w = w;
            ctx->degenerate_rois = degenerate;
        }
        return out;
    }

    Tensor<T> roi_align_backward(const RoiAlignCtx<T>& ctx, const Tensor<T>& dout) const {
        const int g = cfg.roi_grid;
        const int h = ctx.p2_h, w = ctx.p2_w;
        const int c = dout.dim(1) / (g * g);
        Tensor<T> dp2({c, h, w});
        for (int i = 0; i < static_cast<int>(ctx.rois.size()); ++i) {
            const Box& r = ctx.rois[static_cast<size_t>(i)];
            bool degen = r.w() <= 0.f || r.h() <= 0.f;
            for (int gy = 0; gy < g; ++gy) {
                for (int gx = 0; gx < g; ++gx) {
                    float px, py;
                    if (degen) {
                        px = r.cx();
                        py = r.cy();
                    } else {
                        px = r.x1 + (gx + 0.5f) * r.w() / g;
                        py = r.y1 + (gy + 0.5f) * r.h() / g;
                    }
                    int x0, y0;
                    T fx, fy;
                    bilinear_setup(px, w, x0, fx);
                    bilinear_setup(py, h, y0, fy);
                    int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                    T w00 = (T(1) - fy) * (T(1) - fx), w01 = (T(1) - fy) * fx;
                    T w10 = fy * (T(1) - fx), w11 = fy * fx;
                    for (int ci = 0; ci < c; ++ci) {
                        T dv = dout.at(i, (gy * g + gx) * c + ci);
                        dp2.at(ci, y0, x0) += w00 * dv;
                        dp2.at(ci, y0, x1) += w01 * dv;
                        dp2.at(ci, y1, x0) += w10 * dv;
                        dp2.at(ci, y1, x1) += w11 * dv;
                    }
                }
            }
        }
        return dp2;
    }

    // ---- ROI head ----

    RoiHeadOut<T> roi_head(const ParamStore<T>& ps, const Tensor<T>& roi_feats,
                           RoiHeadCtx<T>* ctx) const {
        if (!roi_feats.all_finite()) throw ArgumentError("roi_head: non-finite features");
        RoiHeadOut<T> out;
        auto pre = nn::linear_forward(roi_feats, ps.tensor("roi.fc.w"), ps.tensor("roi.fc.b"),
                                      ctx ? &ctx->fc : nullptr);
        out.features = nn::relu_forward(pre, ctx ? &ctx->relu : nullptr);
        out.cls_logits = nn::linear_forward(out.features, ps.tensor("roi.cls.w"), ps.tensor("roi.cls.b"),
                                            ctx ? &ctx->cls : nullptr);
        out.cls_probs = nn::softmax_rows(out.cls_logits);
        out.box_deltas = nn::linear_forward(out.features, ps.tensor("roi.box.w"), ps.tensor("roi.box.b"),
                                            ctx ? &ctx->box : nullptr);
        return out;
    }

    // dfeatures: extra gradient on F_ins (e.g. from the instance discriminator,
    // already reversed/scaled). Returns droi_feats.
    Tensor<T> roi_head_backward(const ParamStore<T>& ps, const RoiHeadCtx<T>& ctx,
                                const Tensor<T>& dcls_logits, const Tensor<T>& dbox_deltas,
                                const Tensor<T>* dfeatures, GradStore<T>& gs) const {
        Tensor<T> df1, df2;
        nn::linear_backward(ctx.cls, ps.tensor("roi.cls.w"), dcls_logits, gs[ps.find("roi.cls.w")],
                            gs[ps.find("roi.cls.b")], &df1);
        nn::linear_backward(ctx.box, ps.tensor("roi.box.w"), dbox_deltas, gs[ps.find("roi.box.w")],
                            gs[ps.find("roi.box.b")], &df2);
        for (size_t i = 0; i < df1.data.size(); ++i) df1.data[i] += df2.data[i];
        if (dfeatures)
            for (size_t i = 0; i < df1.data.size(); ++i) df1.data[i] += dfeatures->data[i];
        Tensor<T> dpre = nn::relu_backward(ctx.relu, df1);
        Tensor<T> dx;
        nn::linear_backward(ctx.fc, ps.tensor("roi.fc.w"), dpre, gs[ps.find("roi.fc.w")],
                            gs[ps.find("roi.fc.b")], &dx);
        return dx;
    }

    // ---- end-to-end inference ----

    Detections detect(const ParamStore<T>& ps, const Tensor<T>& image, float score_thresh,
                      float nms_thresh, int k_max = 100) const {
        auto pyr = backbone_forward(ps, image, nullptr);
        return detect_on_pyramid(ps, pyr, score_thresh, nms_thresh, k_max);
    }

    // Same as detect() but reuses an already-computed pyramid.
    Detections detect_on_pyramid(const ParamStore<T>& ps, const Pyramid<T>& pyr, float score_thresh,
                                 float nms_thresh, int k_max = 100) const {
        auto rpn = rpn_forward(ps, pyr.p2, nullptr);
        auto props = propose(rpn, pyr.img_h, pyr.img_w, k_max, 0.7f);
        Detections dets;
        if (props.boxes.empty()) return dets;
        auto feats = roi_align(pyr.p2, props.boxes, nullptr);
        auto head = roi_head(ps, feats, nullptr);
        const int n = static_cast<int>(props.boxes.size());
        // decode class-agnostic refinement once per proposal
        std::vector<Box> refined(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            BoxDelta d{static_cast<float>(head.box_deltas.at(i, 0)),
                       static_cast<float>(head.box_deltas.at(i, 1)),
                       static_cast<float>(head.box_deltas.at(i, 2)),
                       static_cast<float>(head.box_deltas.at(i, 3))};
            refined[static_cast<size_t>(i)] =
                clip_box(decode_delta(props.boxes[static_cast<size_t>(i)], d), pyr.img_w, pyr.img_h);
        }
        for (int c = 0; c < cfg.num_classes; ++c) {
            std::vector<Box> cls_boxes;
            std::vector<float> cls_scores;
            for (int i = 0; i < n; ++i) {
                float s = static_cast<float>(head.cls_probs.at(i, c));
                if (s >= score_thresh) {
                    cls_boxes.push_back(refined[static_cast<size_t>(i)]);
                    cls_scores.push_back(s);
                }
            }
            for (int idx : nms(cls_boxes, cls_scores, nms_thresh)) {
                dets.boxes.push_back(cls_boxes[static_cast<size_t>(idx)]);
                dets.labels.push_back(c);
                dets.scores.push_back(cls_scores[static_cast<size_t>(idx)]);
            }
        }
        return dets;
    }

private:
    static void bilinear_setup(float coord, int dim, int& i0, T& frac) {
        // cell centers sit at integer+0.5
        float q = coord - 0.5f;
        float f = std::floor(q);
        i0 = static_cast<int>(f);
        frac = static_cast<T>(q - f);
        if (i0 < 0) {
            i0 = 0;
            frac = T(0);
        } else if (i0 >= dim - 1) {
            i0 = dim - 1;
            frac = T(0);
        }
    }
};

}  // namespace dadet
