// AP50 against a from-definition oracle and PCA against an eigen-solver oracle.

#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dadet/evalmetrics.hpp"
#include "dadet/rng.hpp"

using namespace dadet;

namespace {

// Independent AP-at-IoU computation, written from the protocol description:
// pool detections per class, rank by score (stable), greedily consume the
// best-overlapping unmatched GT per detection, then integrate the all-point
// precision envelope recall level by recall level.
double ap_oracle(const std::vector<EvalImage>& images, int cls, float thresh) {
    struct D {
        int img;
        float score;
        Box box;
    };
    std::vector<D> dets;
    long num_gt = 0;
    for (int i = 0; i < (int)images.size(); ++i) {
        const auto& im = images[(size_t)i];
        for (size_t j = 0; j < im.dets.boxes.size(); ++j)
            if (im.dets.labels[j] == cls) dets.push_back({i, im.dets.scores[j], im.dets.boxes[j]});
        for (int l : im.gt_labels) num_gt += (l == cls);
    }
    if (num_gt == 0) return 0.0;
    std::stable_sort(dets.begin(), dets.end(), [](const D& a, const D& b) { return a.score > b.score; });

    std::vector<std::vector<char>> used(images.size());
    for (size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].gt_boxes.size(), 0);
    std::vector<int> tp_flags;
    for (const D& d : dets) {
        const auto& im = images[(size_t)d.img];
        float best = 0.f;
        int pick = -1;
        for (int j = 0; j < (int)im.gt_boxes.size(); ++j) {
            if (im.gt_labels[(size_t)j] != cls || used[(size_t)d.img][(size_t)j]) continue;
            float v = iou(d.box, im.gt_boxes[(size_t)j]);
            if (v > best) {
                best = v;
                pick = j;
            }
        }
        if (pick >= 0 && best >= thresh) {
            used[(size_t)d.img][(size_t)pick] = 1;
            tp_flags.push_back(1);
        } else {
            tp_flags.push_back(0);
        }
    }

    // recall level j/num_gt gets the max precision among ranks covering it
    std::vector<double> prec;
    int cum = 0;
    for (size_t i = 0; i < tp_flags.size(); ++i) {
        cum += tp_flags[i];
        prec.push_back((double)cum / (double)(i + 1));
    }
    double ap = 0.0;
    int total_tp = cum;
    for (int j = 1; j <= total_tp; ++j) {
        double best_p = 0.0;
        int c2 = 0;
        for (size_t i = 0; i < tp_flags.size(); ++i) {
            c2 += tp_flags[i];
            if (c2 >= j) best_p = std::max(best_p, prec[i]);
        }
        ap += best_p / (double)num_gt;
    }
    return ap;
}

Box grid_box(Rng& rng) {
    // coarse integer grid so random boxes overlap often
    float x = (float)(4 * rng.uniform_int(0, 8)), y = (float)(4 * rng.uniform_int(0, 8));
    float w = (float)(4 * rng.uniform_int(2, 5)), h = (float)(4 * rng.uniform_int(2, 5));
    return {x, y, x + w, y + h};
}

}  // namespace

TEST_CASE("perfect detections score AP 1 per class and mAP 1") {
    EvalImage im;
    im.gt_boxes = {{0, 0, 10, 10}, {20, 20, 40, 40}};
    im.gt_labels = {0, 1};
    im.dets.boxes = im.gt_boxes;
    im.dets.labels = {0, 1};
    im.dets.scores = {0.9f, 0.8f};
    auto rep = ap50({im}, 3);
    CHECK(rep.per_class_ap[0] == doctest::Approx(1.0));
    CHECK(rep.per_class_ap[1] == doctest::Approx(1.0));
    CHECK(rep.map50 == doctest::Approx(1.0));  // class 2 has no GT: excluded
    CHECK(rep.total_gt == 2);
    CHECK(rep.total_dets == 2);
}

TEST_CASE("no detections score AP 0") {
    EvalImage im;
    im.gt_boxes = {{0, 0, 10, 10}};
    im.gt_labels = {0};
    auto rep = ap50({im}, 2);
    CHECK(rep.per_class_ap[0] == 0.0);
    CHECK(rep.map50 == 0.0);
}

TEST_CASE("interleaved false positive: frozen envelope value") {
    // TP(.9) FP(.8) TP(.7) TP(.6) over 3 GT -> AP = (1 + 0.75 + 0.75)/3
    EvalImage im;
    im.gt_boxes = {{0, 0, 10, 10}, {40, 0, 50, 10}, {80, 0, 90, 10}};
    im.gt_labels = {0, 0, 0};
    im.dets.boxes = {{0, 0, 10, 10}, {200, 200, 210, 210}, {40, 0, 50, 10}, {80, 0, 90, 10}};
    im.dets.labels = {0, 0, 0, 0};
    im.dets.scores = {0.9f, 0.8f, 0.7f, 0.6f};
    auto rep = ap50({im}, 1);
    CHECK(rep.per_class_ap[0] == doctest::Approx(2.5 / 3.0).epsilon(1e-12));
}

TEST_CASE("a duplicate detection of a matched GT is a false positive") {
    EvalImage im;
    im.gt_boxes = {{0, 0, 10, 10}};
    im.gt_labels = {0};
    im.dets.boxes = {{0, 0, 10, 10}, {0, 0, 10, 10}};
    im.dets.labels = {0, 0};
    im.dets.scores = {0.9f, 0.8f};
    auto rep = ap50({im}, 1);
    // first matches, second finds the GT consumed: precision never recovers
    CHECK(rep.per_class_ap[0] == doctest::Approx(1.0));  // recall 1 reached at rank 1
    // flip the ranking: the high-score det is off-target
    EvalImage im2 = im;
    im2.dets.boxes = {{100, 100, 110, 110}, {0, 0, 10, 10}};
    auto rep2 = ap50({im2}, 1);
    CHECK(rep2.per_class_ap[0] == doctest::Approx(0.5));
}

TEST_CASE("cross-class detections never match") {
    EvalImage im;
    im.gt_boxes = {{0, 0, 10, 10}};
    im.gt_labels = {1};
    im.dets.boxes = {{0, 0, 10, 10}};
    im.dets.labels = {0};  // right box, wrong class
    im.dets.scores = {0.9f};
    auto rep = ap50({im}, 2);
    CHECK(rep.per_class_ap[0] == 0.0);
    CHECK(rep.per_class_ap[1] == 0.0);
}

TEST_CASE("matching happens within an image, never across") {
    EvalImage a, b;
    a.gt_boxes = {{0, 0, 10, 10}};
    a.gt_labels = {0};
    b.dets.boxes = {{0, 0, 10, 10}};  // same coordinates, wrong image
    b.dets.labels = {0};
    b.dets.scores = {0.9f};
    auto rep = ap50({a, b}, 1);
    CHECK(rep.per_class_ap[0] == 0.0);
}

TEST_CASE("ap50 equals the from-definition oracle on random micro-instances") {
    Rng rng(701);
    for (int trial = 0; trial < 200; ++trial) {
        int n_img = rng.uniform_int(1, 3);
        std::vector<EvalImage> images((size_t)n_img);
        for (auto& im : images) {
            int n_gt = rng.uniform_int(0, 4);
            for (int g = 0; g < n_gt; ++g) {
                im.gt_boxes.push_back(grid_box(rng));
                im.gt_labels.push_back(rng.uniform_int(0, 1));
            }
            int n_det = rng.uniform_int(0, 5);
            for (int d = 0; d < n_det; ++d) {
                im.dets.boxes.push_back(grid_box(rng));
                im.dets.labels.push_back(rng.uniform_int(0, 1));
                // quantized scores force ties through the stable sort
                im.dets.scores.push_back((float)rng.uniform_int(1, 5) / 5.f);
            }
        }
        auto rep = ap50(images, 2);
        for (int c = 0; c < 2; ++c)
            CHECK(rep.per_class_ap[(size_t)c] ==
                  doctest::Approx(ap_oracle(images, c, 0.5f)).epsilon(1e-10));
    }
}

TEST_CASE("pca: collinear points explain everything with one component") {
    Tensor<double> x({6, 3});
    for (int i = 0; i < 6; ++i) {
        x.at(i, 0) = 1.0 * i;
        x.at(i, 1) = 2.0 * i;
        x.at(i, 2) = -1.0 * i;
    }
    auto r = pca_projection(x, 2);
    CHECK(r.rank == 1);
    CHECK(r.padded);
    CHECK(r.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.explained_ratio[1] == 0.0);
    for (int i = 0; i < 6; ++i) CHECK(r.projected.at(i, 1) == 0.0);
    // the surviving component is unit length and parallel to (1,2,-1)
    double n2 = 0, dot = 0;
    double dir[3] = {1, 2, -1};
    double dn = std::sqrt(6.0);
    for (int j = 0; j < 3; ++j) {
        n2 += r.components.at(0, j) * r.components.at(0, j);
        dot += r.components.at(0, j) * dir[j] / dn;
    }
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca matches a covariance eigendecomposition oracle") {
    Rng rng(702);
    const int n = 40, d = 6;
    Tensor<double> x({n, d});
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    // stretch two directions so the spectrum is well separated
    for (int i = 0; i < n; ++i) {
        x.at(i, 0) *= 5.0;
        x.at(i, 1) *= 2.5;
    }
    auto r = pca_projection(x, 3);

    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = x.at(i, j);
    Eigen::RowVectorXd mean = m.colwise().mean();
    m.rowwise() -= mean;
    Eigen::MatrixXd cov = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // eigenvalues ascending; compare the top three ratios
    double total = eig.eigenvalues().sum();
    for (int c = 0; c < 3; ++c) {
        double ev = eig.eigenvalues()(d - 1 - c);
        CHECK(r.explained_ratio[(size_t)c] == doctest::Approx(ev / total).epsilon(1e-8));
        // component parallel to the eigenvector (sign-free)
        double dot = 0;
        for (int j = 0; j < d; ++j) dot += r.components.at(c, j) * eig.eigenvectors()(j, d - 1 - c);
        CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-7));
    }
    // projections reproduce x_centered * component
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 3; ++c) {
            double p = 0;
            for (int j = 0; j < d; ++j) p += m(i, j) * r.components.at(c, j);
            CHECK(r.projected.at(i, c) == doctest::Approx(p).epsilon(1e-8));
        }
}

TEST_CASE("pca components are orthonormal") {
    Rng rng(703);
    Tensor<double> x({30, 5});
    for (auto& v : x.data) v = rng.uniform(-2.0, 2.0);
    auto r = pca_projection(x, 3);
    CHECK(r.rank >= 3);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double dot = 0;
            for (int j = 0; j < 5; ++j) dot += r.components.at(a, j) * r.components.at(b, j);
            CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-9));
        }
}

TEST_CASE("pca input validation") {
    Tensor<double> tiny({1, 4});
    CHECK_THROWS_AS(pca_projection(tiny, 2), ArgumentError);
    Tensor<double> bad({4, 4});
    bad.data[3] = std::nan("");
    CHECK_THROWS_AS(pca_projection(bad, 2), ArgumentError);
    // constant features: rank 0, fully padded
    Tensor<double> flat({5, 3});
    flat.fill(2.0);
    auto r = pca_projection(flat, 2);
    CHECK(r.rank == 0);
    CHECK(r.padded);
    for (double v : r.projected.data) CHECK(v == 0.0);
}
