#pragma once

// Domain discriminators. D1 scores pooled instance features (one logit per
// row), D2 scores a P2-resolution feature map (spatial-mean logit). Both sit
// behind the gradient reversal boundary: their own parameter gradients are the
// plain BCE gradients, while the gradient handed back through the input is
// negated and scaled by the caller.

#include <string>

#include "dadet/nn.hpp"
#include "dadet/params.hpp"

namespace dadet {

struct DiscriminatorCfg {
    int ins_in = 96;     // instance feature width (detector fc_dim)
    int ins_h1 = 128;
    int ins_h2 = 64;
    int img_in = 24;     // P2 channels (detector fpn_ch)
    int img_ch = 8;
};

template <typename T>
struct InsDiscCtx {
    nn::LinearCtx<T> fc1, fc2, fc3;
    nn::ReluCtx<T> r1, r2;
};

template <typename T>
struct ImgDiscCtx {
    nn::ConvCtx<T> c1, c2, c3;
    nn::ReluCtx<T> r1, r2;
    int h = 0, w = 0;
};

template <typename T>
class Discriminators {
public:
    DiscriminatorCfg cfg;

    explicit Discriminators(DiscriminatorCfg c = {}) : cfg(c) {}

    void build_params(ParamStore<T>& store, Rng& rng) const {
        auto fc = [&](const std::string& name, int out, int in) {
            Tensor<T> w({out, in});
            init_weight(w, in, rng);
            store.add(name + ".w", std::move(w));
            store.add(name + ".b", Tensor<T>({out}));
        };
        auto conv = [&](const std::string& name, int out_c, int in_c) {
            Tensor<T> w({out_c, in_c * 9});
            init_weight(w, in_c * 9, rng);
            store.add(name + ".w", std::move(w));
            store.add(name + ".b", Tensor<T>({out_c}));
        };
        fc("d1.fc1", cfg.ins_h1, cfg.ins_in);
        fc("d1.fc2", cfg.ins_h2, cfg.ins_h1);
        fc("d1.fc3", 1, cfg.ins_h2);
        conv("d2.conv1", cfg.img_ch, cfg.img_in);
        conv("d2.conv2", cfg.img_ch, cfg.img_ch);
        conv("d2.conv3", 1, cfg.img_ch);
    }

    // ---- D1: per-row logits {N, 1} from features {N, D} ----

    Tensor<T> ins_forward(const ParamStore<T>& ps, const Tensor<T>& feats, InsDiscCtx<T>* ctx) const {
        auto h1 = nn::relu_forward(
            nn::linear_forward(feats, ps.tensor("d1.fc1.w"), ps.tensor("d1.fc1.b"), ctx ? &ctx->fc1 : nullptr),
            ctx ? &ctx->r1 : nullptr);
        auto h2 = nn::relu_forward(
            nn::linear_forward(h1, ps.tensor("d1.fc2.w"), ps.tensor("d1.fc2.b"), ctx ? &ctx->fc2 : nullptr),
            ctx ? &ctx->r2 : nullptr);
        return nn::linear_forward(h2, ps.tensor("d1.fc3.w"), ps.tensor("d1.fc3.b"), ctx ? &ctx->fc3 : nullptr);
    }

    // dlogits {N, 1} -> returns dfeats {N, D}; D1 param grads land in gs.
    Tensor<T> ins_backward(const ParamStore<T>& ps, const InsDiscCtx<T>& ctx, const Tensor<T>& dlogits,
                           GradStore<T>& gs) const {
        Tensor<T> dh2;
        nn::linear_backward(ctx.fc3, ps.tensor("d1.fc3.w"), dlogits, gs[ps.find("d1.fc3.w")],
                            gs[ps.find("d1.fc3.b")], &dh2);
        Tensor<T> dpre2 = nn::relu_backward(ctx.r2, dh2);
        Tensor<T> dh1;
        nn::linear_backward(ctx.fc2, ps.tensor("d1.fc2.w"), dpre2, gs[ps.find("d1.fc2.w")],
                            gs[ps.find("d1.fc2.b")], &dh1);
        Tensor<T> dpre1 = nn::relu_backward(ctx.r1, dh1);
        Tensor<T> dfeats;
        nn::linear_backward(ctx.fc1, ps.tensor("d1.fc1.w"), dpre1, gs[ps.find("d1.fc1.w")],
                            gs[ps.find("d1.fc1.b")], &dfeats);
        return dfeats;
    }

    // ---- D2: one logit per feature map (spatial mean over a 1-channel map) ----

    T img_forward(const ParamStore<T>& ps, const Tensor<T>& fmap, ImgDiscCtx<T>* ctx) const {
        auto h1 = nn::relu_forward(
            nn::conv2d_forward(fmap, ps.tensor("d2.conv1.w"), ps.tensor("d2.conv1.b"), 3, 1, 1,
                               ctx ? &ctx->c1 : nullptr),
            ctx ? &ctx->r1 : nullptr);
        auto h2 = nn::relu_forward(
            nn::conv2d_forward(h1, ps.tensor("d2.conv2.w"), ps.tensor("d2.conv2.b"), 3, 1, 1,
                               ctx ? &ctx->c2 : nullptr),
            ctx ? &ctx->r2 : nullptr);
        auto lmap = nn::conv2d_forward(h2, ps.tensor("d2.conv3.w"), ps.tensor("d2.conv3.b"), 3, 1, 1,
                                       ctx ? &ctx->c3 : nullptr);
        if (ctx) {
            ctx->h = lmap.dim(1);
            ctx->w = lmap.dim(2);
        }
        T sum = T(0);
        for (T v : lmap.data) sum += v;
        return sum / static_cast<T>(lmap.size());
    }

    // dlogit (scalar) -> returns dfmap; D2 param grads land in gs.
    Tensor<T> img_backward(const ParamStore<T>& ps, const ImgDiscCtx<T>& ctx, T dlogit,
                           GradStore<T>& gs) const {
        Tensor<T> dlmap({1, ctx.h, ctx.w});
        dlmap.fill(dlogit / static_cast<T>(ctx.h * ctx.w));
        Tensor<T> dh2;
        nn::conv2d_backward(ctx.c3, ps.tensor("d2.conv3.w"), dlmap, gs[ps.find("d2.conv3.w")],
                            gs[ps.find("d2.conv3.b")], &dh2);
        Tensor<T> dpre2 = nn::relu_backward(ctx.r2, dh2);
        Tensor<T> dh1;
        nn::conv2d_backward(ctx.c2, ps.tensor("d2.conv2.w"), dpre2, gs[ps.find("d2.conv2.w")],
                            gs[ps.find("d2.conv2.b")], &dh1);
        Tensor<T> dpre1 = nn::relu_backward(ctx.r1, dh1);
        Tensor<T> dfmap;
        nn::conv2d_backward(ctx.c1, ps.tensor("d2.conv1.w"), dpre1, gs[ps.find("d2.conv1.w")],
                            gs[ps.find("d2.conv1.b")], &dfmap);
        return dfmap;
    }
};

}  // namespace dadet
