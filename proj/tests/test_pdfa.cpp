// Prediction-discrepancy instance weighting and the weighted domain BCE.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dadet/pdfa.hpp"
#include "dadet/rng.hpp"

using namespace dadet;

namespace {

Tensor<double> rows2(std::initializer_list<std::initializer_list<double>> vals) {
    int n = (int)vals.size(), c = (int)vals.begin()->size();
    Tensor<double> t({n, c});
    int i = 0;
    for (const auto& row : vals) {
        int j = 0;
        for (double v : row) t.at(i, j++) = v;
        ++i;
    }
    return t;
}

}  // namespace

TEST_CASE("prediction discrepancy hand value") {
    // rows [0.9, 0.1] vs [0.5, 0.5] -> [0.16, 0.16]
    auto p_t = rows2({{0.9, 0.1}});
    auto p_s = rows2({{0.5, 0.5}});
    auto d = prediction_discrepancy(p_t, p_s);
    CHECK(d.at(0, 0) == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(d.at(0, 1) == doctest::Approx(0.16).epsilon(1e-12));
}

TEST_CASE("prediction discrepancy is symmetric and zero at agreement") {
    Rng rng(7);
    Tensor<double> a({4, 3}), b({4, 3});
    for (auto& v : a.data) v = rng.uniform(0.0, 1.0);
    for (auto& v : b.data) v = rng.uniform(0.0, 1.0);
    auto ab = prediction_discrepancy(a, b);
    auto ba = prediction_discrepancy(b, a);
    for (size_t i = 0; i < ab.data.size(); ++i) CHECK(ab.data[i] == ba.data[i]);
    auto aa = prediction_discrepancy(a, a);
    for (double v : aa.data) CHECK(v == 0.0);
    Tensor<double> wrong({3, 4});
    CHECK_THROWS_AS(prediction_discrepancy(a, wrong), ArgumentError);
}

TEST_CASE("instance weights: frozen normalization example") {
    // raw means 0.0 / 0.1 / 0.2 -> normalized 0 / 0.5 / 1
    auto p_div = rows2({{0.0, 0.0}, {0.1, 0.1}, {0.2, 0.2}});
    auto w = instance_weights(p_div);
    REQUIRE(w.raw.size() == 3u);
    CHECK(w.raw[0] == doctest::Approx(0.0));
    CHECK(w.raw[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(w.raw[2] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(!w.degenerate);
    CHECK(w.normalized[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w.normalized[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.normalized[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("instance weights are invariant to positive affine maps of raw scores") {
    Rng rng(13);
    Tensor<double> p({6, 4});
    for (auto& v : p.data) v = rng.uniform(0.0, 1.0);
    auto w1 = instance_weights(p);
    // scale + shift every entry: row means map affinely, normalization cancels it
    Tensor<double> q(p.shape);
    for (size_t i = 0; i < p.data.size(); ++i) q.data[i] = 3.0 * p.data[i] + 0.7;
    auto w2 = instance_weights(q);
    for (size_t i = 0; i < w1.normalized.size(); ++i)
        CHECK(w1.normalized[i] == doctest::Approx(w2.normalized[i]).epsilon(1e-9));
}

TEST_CASE("degenerate discrepancy falls back to uniform weights") {
    auto p_div = rows2({{0.3, 0.1}, {0.2, 0.2}, {0.15, 0.25}});  // all row means 0.2
    auto w = instance_weights(p_div);
    CHECK(w.degenerate);
    for (double v : w.normalized) CHECK(v == 1.0);
    // single instance is always degenerate
    auto w1 = instance_weights(rows2({{0.5, 0.1}}));
    CHECK(w1.degenerate);
    CHECK(w1.normalized[0] == 1.0);
    Tensor<double> empty({0, 4});
    CHECK_THROWS_AS(instance_weights(empty), ArgumentError);
}

TEST_CASE("instance weights bounds and extremes") {
    Rng rng(17);
    Tensor<double> p({9, 5});
    for (auto& v : p.data) v = rng.uniform(0.0, 1.0);
    auto w = instance_weights(p);
    double lo = 2, hi = -1;
    for (double v : w.normalized) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);  // the min instance maps to exactly 0
    CHECK(hi == 1.0);  // the max instance maps to exactly 1
}

TEST_CASE("adv_bce hand values and gradient") {
    // logit 0 -> p = 0.5 -> BCE ln 2 either way
    double dl = 0;
    CHECK(adv_bce(0.0, 1.0, &dl, nullptr) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(dl == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(adv_bce(0.0, 0.0, &dl, nullptr) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(dl == doctest::Approx(0.5).epsilon(1e-12));
    // finite at extreme logits, gradient stays exact p - d
    long clamped = 0;
    double v = adv_bce(40.0, 0.0, &dl, &clamped);
    CHECK(std::isfinite(v));
    CHECK(clamped == 1);
    CHECK(dl == doctest::Approx(1.0).epsilon(1e-9));
    v = adv_bce(-40.0, 1.0, &dl, &clamped);
    CHECK(std::isfinite(v));
    CHECK(clamped == 2);
    CHECK(dl == doctest::Approx(-1.0).epsilon(1e-9));
    // moderate logits never touch the clamp
    long c2 = 0;
    adv_bce(2.0, 1.0, &dl, &c2);
    CHECK(c2 == 0);
}

TEST_CASE("adv_bce gradient matches finite differences") {
    Rng rng(19);
    for (int t = 0; t < 50; ++t) {
        double x = rng.uniform(-8.0, 8.0);
        double d = rng.uniform_int(0, 1);
        double g = 0;
        adv_bce(x, d, &g, nullptr);
        const double h = 1e-6;
        double fd = (adv_bce(x + h, d, (double*)nullptr, nullptr) -
                     adv_bce(x - h, d, (double*)nullptr, nullptr)) /
                    (2 * h);
        CHECK(g == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("weighted instance loss: frozen single-source example") {
    // one source instance (d=1), D1 output 0.5 (logit 0), weight 1 -> loss ln 2
    Tensor<double> logits({1, 1});
    auto out = instance_adversarial_loss(logits, {1}, std::vector<double>{1.0});
    CHECK(out.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(out.per_instance[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(out.dlogits.at(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("weights scale both the loss and the gradient; zero weight masks out") {
    Tensor<double> logits({3, 1});
    logits.at(0, 0) = 0.4;
    logits.at(1, 0) = -1.1;
    logits.at(2, 0) = 2.0;
    std::vector<int> flags = {1, 0, 1};
    auto base = instance_adversarial_loss(logits, flags, std::vector<double>{1.0, 1.0, 1.0});
    auto weighted = instance_adversarial_loss(logits, flags, std::vector<double>{0.0, 2.0, 1.0});
    // manual recombination of the unweighted per-instance values
    double expect = (0.0 * base.per_instance[0] + 2.0 * base.per_instance[1] +
                     1.0 * base.per_instance[2]) /
                    3.0;
    CHECK(weighted.loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(weighted.dlogits.at(0, 0) == 0.0);  // masked instance sends no gradient
    CHECK(weighted.dlogits.at(1, 0) == doctest::Approx(2.0 * base.dlogits.at(1, 0)).epsilon(1e-12));
    CHECK(weighted.dlogits.at(2, 0) == doctest::Approx(base.dlogits.at(2, 0)).epsilon(1e-12));
}

TEST_CASE("instance loss validates lengths and handles empty input") {
    Tensor<double> logits({2, 1});
    CHECK_THROWS_AS(instance_adversarial_loss(logits, {1}, std::vector<double>{1.0, 1.0}),
                    ArgumentError);
    Tensor<double> none({0, 1});
    auto out = instance_adversarial_loss(none, {}, std::vector<double>{});
    CHECK(out.loss == 0.0);
    CHECK(out.clamped == 0);
}

TEST_CASE("instance loss gradient matches finite differences of the weighted sum") {
    Rng rng(23);
    Tensor<double> logits({5, 1});
    for (auto& v : logits.data) v = rng.uniform(-3.0, 3.0);
    std::vector<int> flags = {1, 0, 1, 0, 1};
    std::vector<double> w = {0.2, 0.9, 0.0, 1.0, 0.5};
    auto out = instance_adversarial_loss(logits, flags, w);
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
        Tensor<double> lp = logits, lm = logits;
        lp.at(i, 0) += h;
        lm.at(i, 0) -= h;
        double fd = (instance_adversarial_loss(lp, flags, w).loss -
                     instance_adversarial_loss(lm, flags, w).loss) /
                    (2 * h);
        CHECK(out.dlogits.at(i, 0) == doctest::Approx(fd).epsilon(1e-5));
    }
}
