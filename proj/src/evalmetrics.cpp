#include "dadet/evalmetrics.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dadet/common.hpp"

namespace dadet {

namespace {

struct ClassDet {
    int image;
    int order;  // insertion order within the image, stabilizes ties
    float score;
    Box box;
};

// All-point interpolated AP from per-detection TP flags (already score-sorted).
double ap_from_flags(const std::vector<char>& tp, long num_gt) {
    if (num_gt == 0) return 0.0;
    const size_t n = tp.size();
    std::vector<double> prec(n), rec(n);
    long tp_cum = 0;
    for (size_t i = 0; i < n; ++i) {
        tp_cum += tp[i] ? 1 : 0;
        prec[i] = static_cast<double>(tp_cum) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp_cum) / static_cast<double>(num_gt);
    }
    // precision envelope from the right
    for (size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
    double ap = 0.0, prev_rec = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ap += (rec[i] - prev_rec) * prec[i];
        prev_rec = rec[i];
    }
    return ap;
}

}  // namespace

EvalReport ap50(const std::vector<EvalImage>& images, int num_classes, float iou_thresh) {
    EvalReport rep;
    rep.per_class_ap.assign(static_cast<size_t>(num_classes), 0.0);
    rep.per_class_gt.assign(static_cast<size_t>(num_classes), 0);

    for (const auto& im : images) {
        rep.total_dets += static_cast<long>(im.dets.boxes.size());
        for (int lbl : im.gt_labels)
            if (lbl >= 0 && lbl < num_classes) {
                ++rep.per_class_gt[static_cast<size_t>(lbl)];
                ++rep.total_gt;
            }
    }

    int classes_with_gt = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<ClassDet> dets;
        for (int i = 0; i < static_cast<int>(images.size()); ++i) {
            const auto& d = images[static_cast<size_t>(i)].dets;
            for (int j = 0; j < static_cast<int>(d.boxes.size()); ++j)
                if (d.labels[static_cast<size_t>(j)] == c)
                    dets.push_back({i, j, d.scores[static_cast<size_t>(j)], d.boxes[static_cast<size_t>(j)]});
        }
        std::stable_sort(dets.begin(), dets.end(),
                         [](const ClassDet& a, const ClassDet& b) { return a.score > b.score; });

        // per-image GT indices of this class + matched flags
        std::vector<std::vector<int>> gt_idx(images.size());
        std::vector<std::vector<char>> gt_used(images.size());
        for (size_t i = 0; i < images.size(); ++i) {
            for (int j = 0; j < static_cast<int>(images[i].gt_labels.size()); ++j)
                if (images[i].gt_labels[static_cast<size_t>(j)] == c) gt_idx[i].push_back(j);
            gt_used[i].assign(gt_idx[i].size(), 0);
        }

        std::vector<char> tp(dets.size(), 0);
        for (size_t k = 0; k < dets.size(); ++k) {
            const auto& d = dets[k];
            const auto& im = images[static_cast<size_t>(d.image)];
            float best = 0.f;
            int best_slot = -1;
            for (int s = 0; s < static_cast<int>(gt_idx[static_cast<size_t>(d.image)].size()); ++s) {
                if (gt_used[static_cast<size_t>(d.image)][static_cast<size_t>(s)]) continue;
                float v = iou(d.box, im.gt_boxes[static_cast<size_t>(
                                        gt_idx[static_cast<size_t>(d.image)][static_cast<size_t>(s)])]);
                if (v > best) {  // strict >: IoU ties keep the lowest GT index
                    best = v;
                    best_slot = s;
                }
            }
            if (best_slot >= 0 && best >= iou_thresh) {
                tp[k] = 1;
                gt_used[static_cast<size_t>(d.image)][static_cast<size_t>(best_slot)] = 1;
            }
        }

        long num_gt = rep.per_class_gt[static_cast<size_t>(c)];
        rep.per_class_ap[static_cast<size_t>(c)] = ap_from_flags(tp, num_gt);
        if (num_gt > 0) {
            rep.map50 += rep.per_class_ap[static_cast<size_t>(c)];
            ++classes_with_gt;
        }
    }
    rep.map50 = classes_with_gt > 0 ? rep.map50 / classes_with_gt : 0.0;
    return rep;
}

PcaResult pca_projection(const Tensor<double>& features, int k) {
    const int n = features.dim(0), d = features.dim(1);
    if (n < k) throw ArgumentError("pca_projection: need at least k samples");
    if (!features.all_finite()) throw ArgumentError("pca_projection: non-finite features");

    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = features.at(i, j);
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double total_var = 0.0;
    for (int i = 0; i < sv.size(); ++i) total_var += sv(i) * sv(i);

    PcaResult out;
    out.projected = Tensor<double>({n, k});
    out.components = Tensor<double>({k, d});
    out.explained_ratio.assign(static_cast<size_t>(k), 0.0);
    const double tol = sv.size() > 0 ? sv(0) * 1e-12 : 0.0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol) ++out.rank;

    Eigen::MatrixXd proj = x * svd.matrixV();
    for (int comp = 0; comp < k; ++comp) {
        if (comp >= out.rank || comp >= sv.size()) {
            out.padded = true;
            continue;  // zero direction, zero projection
        }
        for (int j = 0; j < d; ++j) out.components.at(comp, j) = svd.matrixV()(j, comp);
        for (int i = 0; i < n; ++i) out.projected.at(i, comp) = proj(i, comp);
        if (total_var > 0.0)
            out.explained_ratio[static_cast<size_t>(comp)] = sv(comp) * sv(comp) / total_var;
    }
    if (out.padded)
        std::cerr << "pca_projection: data rank " << out.rank << " < k=" << k
                  << ", padding with zero directions\n";
    return out;
}

}  // namespace dadet
