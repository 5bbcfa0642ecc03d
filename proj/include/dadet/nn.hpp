#pragma once

// Minimal layer kernels with explicit forward/backward passes.
// Parameters live outside the layers (see params.hpp); each forward fills a
// context holding what backward needs. Everything is single-threaded and
// deterministic.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dadet/tensor.hpp"

namespace dadet::nn {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatrixX<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatrixX<T>>;

// ---------------------------------------------------------------------------
// conv2d, kernel k x k, padding p, stride s; weight shape {out_c, in_c*k*k}
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

template <typename T>
struct ConvCtx {
    Tensor<T> cols;  // {in_c*k*k, oh*ow}
    int in_c = 0, in_h = 0, in_w = 0;
    int k = 0, s = 0, p = 0;
};

template <typename T>
void im2col(const Tensor<T>& x, int k, int s, int p, Tensor<T>& cols) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = conv_out_dim(h, k, s, p), ow = conv_out_dim(w, k, s, p);
    cols = Tensor<T>({c * k * k, oh * ow});
    T* dst = cols.data.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) *dst++ = T(0);
                        continue;
                    }
                    const T* row = &x.data[(static_cast<size_t>(ci) * h + iy) * w];
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * s - p + kx;
                        *dst++ = (ix >= 0 && ix < w) ? row[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const Tensor<T>& cols, int c, int h, int w, int k, int s, int p, Tensor<T>& x) {
    const int oh = conv_out_dim(h, k, s, p), ow = conv_out_dim(w, k, s, p);
    x = Tensor<T>({c, h, w});
    const T* src = cols.data.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= h) {
                        src += ow;
                        continue;
                    }
                    T* row = &x.data[(static_cast<size_t>(ci) * h + iy) * w];
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * s - p + kx;
                        if (ix >= 0 && ix < w) row[ix] += *src;
                        ++src;
                    }
                }
            }
        }
    }
}

// y{out_c, oh, ow} = W{out_c, in_c*k*k} * cols + b
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         int k, int s, int p, ConvCtx<T>* ctx) {
    const int in_c = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
    const int out_c = weight.dim(0);
    const int oh = conv_out_dim(in_h, k, s, p), ow = conv_out_dim(in_w, k, s, p);
    Tensor<T> cols;
    im2col(x, k, s, p, cols);
    Tensor<T> y({out_c, oh, ow});
    CMapM<T> wm(weight.data.data(), out_c, in_c * k * k);
    CMapM<T> cm(cols.data.data(), in_c * k * k, oh * ow);
    MapM<T> ym(y.data.data(), out_c, oh * ow);
    ym.noalias() = wm * cm;
    for (int oc = 0; oc < out_c; ++oc) ym.row(oc).array() += bias.data[static_cast<size_t>(oc)];
    if (ctx) {
        ctx->cols = std::move(cols);
        ctx->in_c = in_c;
        ctx->in_h = in_h;
        ctx->in_w = in_w;
        ctx->k = k;
        ctx->s = s;
        ctx->p = p;
    }
    return y;
}

// dx is optional (skip for the input layer).
template <typename T>
void conv2d_backward(const ConvCtx<T>& ctx, const Tensor<T>& weight, const Tensor<T>& dy,
                     Tensor<T>& dweight, Tensor<T>& dbias, Tensor<T>* dx) {
    const int out_c = weight.dim(0);
    const int cols_rows = ctx.in_c * ctx.k * ctx.k;
    const int spatial = dy.dim(1) * dy.dim(2);
    CMapM<T> dym(dy.data.data(), out_c, spatial);
    CMapM<T> cm(ctx.cols.data.data(), cols_rows, spatial);
    MapM<T> dwm(dweight.data.data(), out_c, cols_rows);
    dwm.noalias() += dym * cm.transpose();
    // scalar bias reduction: Eigen's vectorized redux splits by pointer
    // alignment, which would make results depend on where the heap put dy
    for (int oc = 0; oc < out_c; ++oc) {
        T s = T(0);
        const T* row = dy.data.data() + static_cast<size_t>(oc) * spatial;
        for (int i = 0; i < spatial; ++i) s += row[i];
        dbias.data[static_cast<size_t>(oc)] += s;
    }
    if (dx) {
        Tensor<T> dcols({cols_rows, spatial});
        CMapM<T> wm(weight.data.data(), out_c, cols_rows);
        MapM<T> dcm(dcols.data.data(), cols_rows, spatial);
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcols, ctx.in_c, ctx.in_h, ctx.in_w, ctx.k, ctx.s, ctx.p, *dx);
    }
}

// ---------------------------------------------------------------------------
// linear: y{n, out} = x{n, in} * W^T + b, weight shape {out, in}
// ---------------------------------------------------------------------------

template <typename T>
struct LinearCtx {
    Tensor<T> x;
};

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         LinearCtx<T>* ctx) {
    const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
    Tensor<T> y({n, out});
    CMapM<T> xm(x.data.data(), n, in);
    CMapM<T> wm(weight.data.data(), out, in);
    MapM<T> ym(y.data.data(), n, out);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) y.at(i, j) += bias.data[static_cast<size_t>(j)];
    if (ctx) ctx->x = x;
    return y;
}

template <typename T>
void linear_backward(const LinearCtx<T>& ctx, const Tensor<T>& weight, const Tensor<T>& dy,
                     Tensor<T>& dweight, Tensor<T>& dbias, Tensor<T>* dx) {
    const int n = ctx.x.dim(0), in = ctx.x.dim(1), out = weight.dim(0);
    CMapM<T> xm(ctx.x.data.data(), n, in);
    CMapM<T> dym(dy.data.data(), n, out);
    MapM<T> dwm(dweight.data.data(), out, in);
    dwm.noalias() += dym.transpose() * xm;
    // scalar bias reduction; see conv2d_backward for why this is not a redux
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) dbias.data[static_cast<size_t>(j)] += dy.at(i, j);
    if (dx) {
        *dx = Tensor<T>({n, in});
        CMapM<T> wm(weight.data.data(), out, in);
        MapM<T> dxm(dx->data.data(), n, in);
        dxm.noalias() = dym * wm;
    }
}

// ---------------------------------------------------------------------------
// relu (mask kept for backward)
// ---------------------------------------------------------------------------

template <typename T>
struct ReluCtx {
    std::vector<uint8_t> mask;
};

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x, ReluCtx<T>* ctx) {
    Tensor<T> y = x;
    if (ctx) ctx->mask.assign(x.data.size(), 0);
    for (size_t i = 0; i < y.data.size(); ++i) {
        if (y.data[i] > T(0)) {
            if (ctx) ctx->mask[i] = 1;
        } else {
            y.data[i] = T(0);
        }
    }
    return y;
}

template <typename T>
Tensor<T> relu_backward(const ReluCtx<T>& ctx, const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i)
        if (!ctx.mask[i]) dx.data[i] = T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// nearest-neighbour x2 upsample, cropped to a target size
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x, int out_h, int out_w) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> y({c, out_h, out_w});
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < out_h; ++oy) {
            int iy = std::min(oy / 2, h - 1);
            for (int ox = 0; ox < out_w; ++ox) y.at(ci, oy, ox) = x.at(ci, iy, std::min(ox / 2, w - 1));
        }
    return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy, int in_h, int in_w) {
    const int c = dy.dim(0), oh = dy.dim(1), ow = dy.dim(2);
    Tensor<T> dx({c, in_h, in_w});
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy) {
            int iy = std::min(oy / 2, in_h - 1);
            for (int ox = 0; ox < ow; ++ox) dx.at(ci, iy, std::min(ox / 2, in_w - 1)) += dy.at(ci, oy, ox);
        }
    return dx;
}

// ---------------------------------------------------------------------------
// row-wise softmax
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    Tensor<T> p = logits;
    const int n = p.dim(0), c = p.dim(1);
    for (int i = 0; i < n; ++i) {
        T mx = p.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, p.at(i, j));
        T sum = T(0);
        for (int j = 0; j < c; ++j) {
            p.at(i, j) = std::exp(p.at(i, j) - mx);
            sum += p.at(i, j);
        }
        for (int j = 0; j < c; ++j) p.at(i, j) /= sum;
    }
    return p;
}

// Mean cross-entropy over rows against integer labels; dlogits = (p - onehot)/n.
template <typename T>
T softmax_ce(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>* dlogits) {
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor<T> p = softmax_rows(logits);
    T loss = T(0);
    if (dlogits) *dlogits = p;
    for (int i = 0; i < n; ++i) {
        T pi = std::max(p.at(i, labels[static_cast<size_t>(i)]), T(1e-12));
        loss -= std::log(pi);
        if (dlogits) dlogits->at(i, labels[static_cast<size_t>(i)]) -= T(1);
    }
    loss /= T(n);
    if (dlogits)
        for (auto& v : dlogits->data) v /= T(n);
    return loss;
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// Binary cross-entropy on a single logit. d = domain target in {0,1}.
// Returns the loss; dlogit gets sigmoid(x) - d.
template <typename T>
T bce_logit(T logit, T target, T* dlogit) {
    T z = std::max(logit, T(0));
    T loss = z - logit * target + std::log(T(1) + std::exp(-std::abs(logit)));
    if (dlogit) *dlogit = sigmoid(logit) - target;
    return loss;
}

}  // namespace dadet::nn
