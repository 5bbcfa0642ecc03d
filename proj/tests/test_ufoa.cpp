// Foreground mask rasterization, feature splitting, and the gamma mix.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dadet/rng.hpp"
#include "dadet/ufoa.hpp"

using namespace dadet;

namespace {

// independent point-in-box check over every cell center
std::vector<std::uint8_t> mask_oracle(const std::vector<Box>& boxes, int img_w, int img_h, int s2) {
    int h = (img_h + s2 - 1) / s2, w = (img_w + s2 - 1) / s2;
    std::vector<std::uint8_t> m((size_t)h * w, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double cx = (j + 0.5) * s2, cy = (i + 0.5) * s2;
            for (const Box& b : boxes)
                if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) {
                    m[(size_t)i * w + j] = 1;
                    break;
                }
        }
    return m;
}

}  // namespace

TEST_CASE("mask dimensions and the empty/full extremes") {
    auto empty = build_mask({}, 128, 128, 4, false);
    CHECK(empty.h == 32);
    CHECK(empty.w == 32);
    CHECK(empty.empty_fg());
    CHECK(empty.popcount() == 0);

    auto full = build_mask({{0, 0, 128, 128}}, 128, 128, 4, true);
    CHECK(full.popcount() == 32 * 32);
    CHECK(full.from_pseudo);

    // non-divisible image sizes round the grid up
    auto odd = build_mask({}, 130, 126, 4, false);
    CHECK(odd.w == 33);
    CHECK(odd.h == 32);
}

TEST_CASE("mask cell membership is exactly center-inside-box") {
    // box [4,12)x[4,8] at stride 4: centers 6,10 inside on x; center 6 on y
    auto m = build_mask({{4, 4, 12, 8}}, 16, 16, 4, false);
    REQUIRE(m.h == 4);
    REQUIRE(m.w == 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            bool expect = (i == 1) && (j == 1 || j == 2);
            CHECK((int)m.m[(size_t)i * 4 + j] == (expect ? 1 : 0));
        }
    // inclusive edge: a center exactly on the boundary counts
    auto edge = build_mask({{2, 2, 6, 6}}, 16, 16, 4, false);
    CHECK(edge.m[0 * 4 + 0] == 1);  // center (2,2) on the corner
    CHECK(edge.m[1 * 4 + 1] == 1);  // center (6,6) on the far corner
    CHECK(edge.popcount() == 4);
}

TEST_CASE("mask matches the point-in-box oracle on random scenes") {
    Rng rng(401);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Box> boxes;
        int nb = rng.uniform_int(0, 6);
        for (int b = 0; b < nb; ++b) {
            float x = (float)rng.uniform(0, 100), y = (float)rng.uniform(0, 100);
            boxes.push_back({x, y, x + (float)rng.uniform(4, 40), y + (float)rng.uniform(4, 40)});
        }
        auto m = build_mask(boxes, 128, 128, 4, false);
        auto oracle = mask_oracle(boxes, 128, 128, 4);
        REQUIRE(m.m.size() == oracle.size());
        for (size_t i = 0; i < m.m.size(); ++i) CHECK(m.m[i] == oracle[i]);
    }
}

TEST_CASE("split is an exact complementary decomposition") {
    Rng rng(402);
    Tensor<double> fmap({3, 8, 8});
    for (auto& v : fmap.data) v = rng.uniform(-2.0, 2.0);
    auto mask = build_mask({{4, 4, 20, 20}, {24, 0, 31, 12}}, 32, 32, 4, false);
    auto split = split_features(fmap, mask);
    REQUIRE(split.fg.shape == fmap.shape);
    for (size_t i = 0; i < fmap.data.size(); ++i) {
        CHECK(split.fg.data[i] + split.bg.data[i] == fmap.data[i]);
        CHECK((split.fg.data[i] == 0.0 || split.bg.data[i] == 0.0));
    }
    // every fg cell keeps the original value on all channels
    const size_t plane = 64;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < plane; ++i) {
            double want_fg = mask.m[i] ? fmap.data[c * plane + i] : 0.0;
            CHECK(split.fg.data[c * plane + i] == want_fg);
        }
}

TEST_CASE("whole-image mask reproduces the full map in fg") {
    Rng rng(403);
    Tensor<double> fmap({2, 4, 4});
    for (auto& v : fmap.data) v = rng.uniform(-1.0, 1.0);
    auto mask = build_mask({{0, 0, 16, 16}}, 16, 16, 4, false);
    auto split = split_features(fmap, mask);
    for (size_t i = 0; i < fmap.data.size(); ++i) {
        CHECK(split.fg.data[i] == fmap.data[i]);
        CHECK(split.bg.data[i] == 0.0);
    }
    Tensor<double> wrong({2, 5, 4});
    CHECK_THROWS_AS(split_features(wrong, mask), ArgumentError);
}

TEST_CASE("mask_gradient routes each branch to its own cells") {
    Rng rng(404);
    Tensor<double> d({2, 4, 4});
    for (auto& v : d.data) v = rng.uniform(-1.0, 1.0);
    auto mask = build_mask({{0, 0, 8, 8}}, 16, 16, 4, false);  // top-left 2x2 cells
    auto dfg = mask_gradient(d, mask, true);
    auto dbg = mask_gradient(d, mask, false);
    const size_t plane = 16;
    for (int c = 0; c < 2; ++c)
        for (size_t i = 0; i < plane; ++i) {
            CHECK(dfg.data[c * plane + i] == (mask.m[i] ? d.data[c * plane + i] : 0.0));
            CHECK(dbg.data[c * plane + i] == (mask.m[i] ? 0.0 : d.data[c * plane + i]));
            CHECK(dfg.data[c * plane + i] + dbg.data[c * plane + i] == d.data[c * plane + i]);
        }
}

TEST_CASE("gamma mix: frozen example and endpoints") {
    // gamma 0.8, L_fg 1.0, L_bg 0.5 -> 0.9
    CHECK(combine(1.0, 0.5, 0.8) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(combine(1.0, 0.5, 1.0) == doctest::Approx(1.0));   // gamma 1: only fg
    CHECK(combine(1.0, 0.5, 0.0) == doctest::Approx(0.5));   // gamma 0: only bg
    CHECK(combine(0.3, 0.3, 0.62) == doctest::Approx(0.3));  // equal sides: any gamma
    CHECK_THROWS_AS(combine(1.0, 0.5, 1.2), ConfigError);
    CHECK_THROWS_AS(combine(1.0, 0.5, -0.1), ConfigError);
    double nan = std::nan("");
    CHECK_THROWS_AS(combine(1.0, 0.5, nan), ConfigError);
}

TEST_CASE("image-level BCE hand value through the fg branch") {
    // D2 output 0.5 on a source fg map: L_fg = ln 2
    double dl = 0;
    double l_fg = adv_bce(0.0, 1.0, &dl, nullptr);
    CHECK(l_fg == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}
