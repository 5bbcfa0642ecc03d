// RPN/ROI target assignment and the RPN loss arithmetic.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dadet/targets.hpp"

using namespace dadet;

TEST_CASE("rpn_targets thresholds and the per-GT argmax override") {
    // three anchors: exact match (IoU 1), moderate overlap, far away
    std::vector<Box> anchors = {{10, 10, 20, 20}, {12, 10, 22, 20}, {50, 50, 60, 60}};
    std::vector<Box> gt = {{10, 10, 20, 20}};
    Rng rng(1);
    auto tgt = rpn_targets(anchors, gt, rng, 0.7f, 0.3f, 16, 8);
    REQUIRE(tgt.anchor_idx.size() == tgt.labels.size());
    int lbl[3] = {-1, -1, -1};
    for (size_t i = 0; i < tgt.anchor_idx.size(); ++i) lbl[tgt.anchor_idx[i]] = tgt.labels[i];
    CHECK(lbl[0] == 1);   // IoU 1.0 >= 0.7
    CHECK(lbl[1] == -1);  // IoU 8/12 = 0.667: ignored (between thresholds)
    CHECK(lbl[2] == 0);   // IoU 0 < 0.3
    CHECK(tgt.num_pos == 1);

    // when no anchor clears pos_thresh, the best one is still forced positive
    std::vector<Box> weak = {{0, 0, 30, 30}, {40, 40, 70, 70}};
    std::vector<Box> g2 = {{12, 12, 20, 20}};  // IoU with anchor 0 = 64/900
    auto t2 = rpn_targets(weak, g2, rng, 0.7f, 0.01f, 16, 8);
    bool anchor0_pos = false;
    for (size_t i = 0; i < t2.anchor_idx.size(); ++i)
        if (t2.anchor_idx[i] == 0 && t2.labels[i] == 1) anchor0_pos = true;
    CHECK(anchor0_pos);
    CHECK(t2.num_pos == 1);
}

TEST_CASE("rpn_targets with no GT marks everything negative") {
    std::vector<Box> anchors;
    for (int i = 0; i < 10; ++i)
        anchors.push_back({(float)i * 5, 0, (float)i * 5 + 8, 8});
    Rng rng(2);
    auto tgt = rpn_targets(anchors, {}, rng, 0.7f, 0.3f, 6, 3);
    CHECK(tgt.num_pos == 0);
    CHECK(tgt.anchor_idx.size() == 6u);  // sampled down to num_samples
    for (int l : tgt.labels) CHECK(l == 0);
}

TEST_CASE("rpn_targets positive deltas encode the matched GT") {
    std::vector<Box> anchors = {{10, 10, 20, 20}};
    std::vector<Box> gt = {{11, 12, 21, 24}};
    Rng rng(3);
    auto tgt = rpn_targets(anchors, gt, rng, 0.5f, 0.3f, 4, 4);
    REQUIRE(tgt.num_pos == 1);
    BoxDelta expect = encode_delta(anchors[0], gt[0]);
    CHECK(tgt.delta_targets[0].tx == doctest::Approx(expect.tx));
    CHECK(tgt.delta_targets[0].ty == doctest::Approx(expect.ty));
    CHECK(tgt.delta_targets[0].tw == doctest::Approx(expect.tw));
    CHECK(tgt.delta_targets[0].th == doctest::Approx(expect.th));
}

TEST_CASE("roi_targets splits foreground and background at the threshold") {
    std::vector<Box> rois = {{0, 0, 10, 10}, {1, 0, 11, 10}, {40, 40, 50, 50}, {6, 0, 16, 10}};
    std::vector<Box> gt = {{0, 0, 10, 10}};
    std::vector<int> labels = {2};
    auto tgt = roi_targets(rois, gt, labels, 3, 0.5f);
    // roi 0: IoU 1 -> fg class 2; roi 1: IoU 9/11 -> fg; roi 2: 0 -> bg;
    // roi 3: IoU 4/16 = 0.25 -> bg
    CHECK(tgt.labels[0] == 2);
    CHECK(tgt.labels[1] == 2);
    CHECK(tgt.labels[2] == 3);  // background column
    CHECK(tgt.labels[3] == 3);
    CHECK(tgt.num_pos == 2);
    CHECK(tgt.is_fg[0] == 1);
    CHECK(tgt.is_fg[2] == 0);
    BoxDelta d = tgt.deltas[1];
    BoxDelta expect = encode_delta(rois[1], gt[0]);
    CHECK(d.tx == doctest::Approx(expect.tx));
}

TEST_CASE("roi_targets with empty GT labels everything background") {
    std::vector<Box> rois = {{0, 0, 10, 10}, {5, 5, 15, 15}};
    auto tgt = roi_targets(rois, {}, {}, 3, 0.5f);
    CHECK(tgt.num_pos == 0);
    for (int l : tgt.labels) CHECK(l == 3);
}

TEST_CASE("build_train_rois puts GT first, then proposals, then cycles") {
    ProposalSet props;
    props.boxes = {{20, 20, 30, 30}, {40, 40, 50, 50}};
    props.objectness = {0.9f, 0.8f};
    std::vector<Box> gt = {{0, 0, 10, 10}};
    auto rois = build_train_rois(props, gt, 5);
    REQUIRE(rois.size() == 5u);
    CHECK(rois[0].x1 == 0.f);    // GT first
    CHECK(rois[1].x1 == 20.f);   // best proposal
    CHECK(rois[2].x1 == 40.f);
    CHECK(rois[3].x1 == 0.f);    // cycles back
    CHECK(rois[4].x1 == 20.f);

    auto truncated = build_train_rois(props, gt, 2);
    REQUIRE(truncated.size() == 2u);
    CHECK(truncated[0].x1 == 0.f);
    CHECK(truncated[1].x1 == 20.f);

    auto none = build_train_rois({}, {}, 4);
    CHECK(none.empty());
}

TEST_CASE("rpn_loss arithmetic on a tiny hand case") {
    // one anchor per cell, 2x2 grid; sample anchor 0 positive, anchor 3 negative
    RpnOut<double> rpn;
    rpn.obj_logits = Tensor<double>({1, 2, 2});
    rpn.deltas = Tensor<double>({4, 2, 2});
    rpn.obj_logits.at(0, 0, 0) = 0.0;  // positive at logit 0 -> BCE ln 2
    rpn.obj_logits.at(0, 1, 1) = 0.0;  // negative at logit 0 -> BCE ln 2
    for (int k = 0; k < 4; ++k) rpn.deltas.at(k, 0, 0) = 0.1;  // target 0 -> |diff| 0.1 each

    RpnTargets tgt;
    tgt.anchor_idx = {0, 3};
    tgt.labels = {1, 0};
    tgt.delta_targets = {{}, {}};
    tgt.num_pos = 1;

    auto loss = rpn_loss(rpn, tgt, 1);
    CHECK(loss.obj == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss.reg == doctest::Approx(0.4).epsilon(1e-12));
    // d obj at the positive: (sigmoid(0) - 1)/n = -0.25; at the negative: +0.25
    CHECK(loss.dobj.at(0, 0, 0) == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(loss.dobj.at(0, 1, 1) == doctest::Approx(0.25).epsilon(1e-12));
    // d reg: sign(0.1)/num_pos = 1 at the four positive delta slots
    for (int k = 0; k < 4; ++k) CHECK(loss.ddelta.at(k, 0, 0) == doctest::Approx(1.0));
    CHECK(loss.ddelta.at(0, 1, 1) == 0.0);
}

TEST_CASE("rpn_loss with an empty sample is zero") {
    RpnOut<double> rpn;
    rpn.obj_logits = Tensor<double>({1, 2, 2});
    rpn.deltas = Tensor<double>({4, 2, 2});
    RpnTargets tgt;
    auto loss = rpn_loss(rpn, tgt, 1);
    CHECK(loss.obj == 0.0);
    CHECK(loss.reg == 0.0);
    for (double v : loss.dobj.data) CHECK(v == 0.0);
}

TEST_CASE("rpn_targets sampling respects max_pos and num_samples") {
    // a dense cluster of identical anchors on one GT
    std::vector<Box> anchors(20, Box{0, 0, 10, 10});
    for (int i = 0; i < 30; ++i) anchors.push_back({100, 100, 110, 110});
    std::vector<Box> gt = {{0, 0, 10, 10}};
    Rng rng(9);
    auto tgt = rpn_targets(anchors, gt, rng, 0.7f, 0.3f, 16, 4);
    CHECK(tgt.num_pos == 4);
    CHECK(tgt.anchor_idx.size() == 16u);
    int neg = 0;
    for (int l : tgt.labels) neg += (l == 0);
    CHECK(neg == 12);
}
