// Finite-difference checks for every layer kernel, at double precision.

#include <doctest.h>

#include <cmath>
#include <functional>

#include "dadet/nn.hpp"
#include "dadet/rng.hpp"
#include "dadet/tensor.hpp"

using namespace dadet;

namespace {

void randomize(Tensor<double>& t, Rng& rng, double scale = 1.0) {
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
}

// central differences over every element of `param` against scalar loss_fn
void fd_check(Tensor<double>& param, const Tensor<double>& analytic,
              const std::function<double()>& loss_fn, double tol = 1e-7, double h = 1e-6) {
    REQUIRE(param.data.size() == analytic.data.size());
    for (size_t i = 0; i < param.data.size(); ++i) {
        double keep = param.data[i];
        param.data[i] = keep + h;
        double up = loss_fn();
        param.data[i] = keep - h;
        double dn = loss_fn();
        param.data[i] = keep;
        double fd = (up - dn) / (2 * h);
        double denom = std::max({1.0, std::abs(fd), std::abs(analytic.data[i])});
        CHECK(std::abs(fd - analytic.data[i]) / denom < tol);
    }
}

// simple scalar reduction so every output element gets a distinct weight
double weighted_sum(const Tensor<double>& y) {
    double s = 0;
    for (size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * std::sin(0.7 * (double)i + 0.3);
    return s;
}

Tensor<double> weighted_sum_grad(const Tensor<double>& y) {
    Tensor<double> d(y.shape);
    for (size_t i = 0; i < d.data.size(); ++i) d.data[i] = std::sin(0.7 * (double)i + 0.3);
    return d;
}

}  // namespace

TEST_CASE("conv2d gradients match central differences") {
    Rng rng(11);
    Tensor<double> x({3, 7, 6}), w({4, 3 * 9}), b({4});
    randomize(x, rng);
    randomize(w, rng, 0.5);
    randomize(b, rng, 0.1);
    const int k = 3, s = 2, p = 1;

    auto loss = [&] { return weighted_sum(nn::conv2d_forward(x, w, b, k, s, p, (nn::ConvCtx<double>*)nullptr)); };

    nn::ConvCtx<double> ctx;
    Tensor<double> y = nn::conv2d_forward(x, w, b, k, s, p, &ctx);
    Tensor<double> dy = weighted_sum_grad(y);
    Tensor<double> dw(w.shape), db(b.shape), dx;
    nn::conv2d_backward(ctx, w, dy, dw, db, &dx);

    fd_check(w, dw, loss);
    fd_check(b, db, loss);
    fd_check(x, dx, loss);
}

TEST_CASE("conv2d stride-1 same-padding gradients") {
    Rng rng(12);
    Tensor<double> x({2, 5, 5}), w({3, 2 * 9}), b({3});
    randomize(x, rng);
    randomize(w, rng, 0.5);
    randomize(b, rng, 0.1);

    auto loss = [&] { return weighted_sum(nn::conv2d_forward(x, w, b, 3, 1, 1, (nn::ConvCtx<double>*)nullptr)); };
    nn::ConvCtx<double> ctx;
    Tensor<double> y = nn::conv2d_forward(x, w, b, 3, 1, 1, &ctx);
    Tensor<double> dy = weighted_sum_grad(y);
    Tensor<double> dw(w.shape), db(b.shape), dx;
    nn::conv2d_backward(ctx, w, dy, dw, db, &dx);
    fd_check(w, dw, loss);
    fd_check(x, dx, loss);
}

TEST_CASE("conv2d 1x1 gradients") {
    Rng rng(13);
    Tensor<double> x({3, 4, 4}), w({2, 3}), b({2});
    randomize(x, rng);
    randomize(w, rng);
    randomize(b, rng);
    auto loss = [&] { return weighted_sum(nn::conv2d_forward(x, w, b, 1, 1, 0, (nn::ConvCtx<double>*)nullptr)); };
    nn::ConvCtx<double> ctx;
    Tensor<double> y = nn::conv2d_forward(x, w, b, 1, 1, 0, &ctx);
    Tensor<double> dw(w.shape), db(b.shape), dx;
    nn::conv2d_backward(ctx, w, weighted_sum_grad(y), dw, db, &dx);
    fd_check(w, dw, loss);
    fd_check(b, db, loss);
    fd_check(x, dx, loss);
}

TEST_CASE("linear gradients match central differences") {
    Rng rng(14);
    Tensor<double> x({5, 7}), w({3, 7}), b({3});
    randomize(x, rng);
    randomize(w, rng, 0.5);
    randomize(b, rng, 0.1);
    auto loss = [&] { return weighted_sum(nn::linear_forward(x, w, b, (nn::LinearCtx<double>*)nullptr)); };
    nn::LinearCtx<double> ctx;
    Tensor<double> y = nn::linear_forward(x, w, b, &ctx);
    Tensor<double> dw(w.shape), db(b.shape), dx;
    nn::linear_backward(ctx, w, weighted_sum_grad(y), dw, db, &dx);
    fd_check(w, dw, loss);
    fd_check(b, db, loss);
    fd_check(x, dx, loss);
}

TEST_CASE("relu gradient masks negatives") {
    Rng rng(15);
    Tensor<double> x({40});
    randomize(x, rng);
    // keep activations away from the kink so finite differences are valid
    for (auto& v : x.data)
        if (std::abs(v) < 0.05) v = 0.1;
    auto loss = [&] { return weighted_sum(nn::relu_forward(x, (nn::ReluCtx<double>*)nullptr)); };
    nn::ReluCtx<double> ctx;
    Tensor<double> y = nn::relu_forward(x, &ctx);
    Tensor<double> dx = nn::relu_backward(ctx, weighted_sum_grad(y));
    fd_check(x, dx, loss);
}

TEST_CASE("upsample2 backward is the exact adjoint") {
    Rng rng(16);
    Tensor<double> x({2, 3, 4});
    randomize(x, rng);
    const int oh = 6, ow = 7;  // odd target exercises the crop path
    auto loss = [&] { return weighted_sum(nn::upsample2_forward(x, oh, ow)); };
    Tensor<double> y = nn::upsample2_forward(x, oh, ow);
    Tensor<double> dx = nn::upsample2_backward(weighted_sum_grad(y), 3, 4);
    fd_check(x, dx, loss, 1e-9);
}

TEST_CASE("softmax_ce value and gradient") {
    Rng rng(17);
    Tensor<double> logits({6, 4});
    randomize(logits, rng, 2.0);
    std::vector<int> labels = {0, 3, 1, 2, 2, 0};

    Tensor<double> dlogits(logits.shape);
    double ce = nn::softmax_ce(logits, labels, &dlogits);

    // independent direct evaluation
    double want = 0;
    for (int i = 0; i < 6; ++i) {
        double mx = logits.at(i, 0);
        for (int j = 1; j < 4; ++j) mx = std::max(mx, logits.at(i, j));
        double z = 0;
        for (int j = 0; j < 4; ++j) z += std::exp(logits.at(i, j) - mx);
        want -= logits.at(i, labels[(size_t)i]) - mx - std::log(z);
    }
    want /= 6;
    CHECK(ce == doctest::Approx(want).epsilon(1e-12));

    auto loss = [&] { return nn::softmax_ce(logits, labels, (Tensor<double>*)nullptr); };
    fd_check(logits, dlogits, loss);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(18);
    Tensor<double> logits({5, 4});
    randomize(logits, rng, 3.0);
    Tensor<double> p = nn::softmax_rows(logits);
    for (int i = 0; i < 5; ++i) {
        double s = 0;
        for (int j = 0; j < 4; ++j) {
            s += p.at(i, j);
            CHECK(p.at(i, j) >= 0.0);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("bce_logit value and gradient, including extreme logits") {
    for (double logit : {-30.0, -2.0, 0.0, 1.5, 30.0}) {
        for (double target : {0.0, 1.0}) {
            double dl;
            double v = nn::bce_logit(logit, target, &dl);
            CHECK(std::isfinite(v));
            double p = 1.0 / (1.0 + std::exp(-logit));
            CHECK(dl == doctest::Approx(p - target).epsilon(1e-9));
            if (std::abs(logit) < 5) {
                double direct = -target * std::log(p) - (1 - target) * std::log(1 - p);
                CHECK(v == doctest::Approx(direct).epsilon(1e-9));
                double h = 1e-6, d1, d2;
                double up = nn::bce_logit(logit + h, target, &d1);
                double dn = nn::bce_logit(logit - h, target, &d2);
                CHECK((up - dn) / (2 * h) == doctest::Approx(dl).epsilon(1e-5));
            }
        }
    }
    // logit 0 -> ln 2 for either target
    double dl;
    CHECK(nn::bce_logit(0.0, 1.0, &dl) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("im2col and conv against a naive direct convolution") {
    Rng rng(19);
    Tensor<double> x({2, 6, 5}), w({3, 2 * 9}), b({3});
    randomize(x, rng);
    randomize(w, rng);
    randomize(b, rng);
    const int k = 3, s = 2, p = 1;
    Tensor<double> y = nn::conv2d_forward(x, w, b, k, s, p, (nn::ConvCtx<double>*)nullptr);
    const int oh = nn::conv_out_dim(6, k, s, p), ow = nn::conv_out_dim(5, k, s, p);
    REQUIRE(y.dim(1) == oh);
    REQUIRE(y.dim(2) == ow);
    for (int oc = 0; oc < 3; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b.data[(size_t)oc];
                for (int ic = 0; ic < 2; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy * s - p + ky, ix = ox * s - p + kx;
                            if (iy < 0 || iy >= 6 || ix < 0 || ix >= 5) continue;
                            acc += w.at(oc, (ic * k + ky) * k + kx) * x.at(ic, iy, ix);
                        }
                CHECK(y.at(oc, oy, ox) == doctest::Approx(acc).epsilon(1e-10));
            }
}
