#pragma once

// Detection evaluation (per-class PASCAL-style AP at IoU 0.5, all-point
// precision envelope) and a PCA projection for feature-distribution plots.

#include <string>
#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/model.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

struct EvalImage {
    Detections dets;
    std::vector<Box> gt_boxes;
    std::vector<int> gt_labels;
};

struct EvalReport {
    std::vector<double> per_class_ap;  // AP50 per class; classes without GT hold 0
    std::vector<long> per_class_gt;
    double map50 = 0.0;  // mean over classes with at least one GT
    long total_gt = 0;
    long total_dets = 0;
};

// Score-sorted greedy matching: each detection takes the unmatched same-class
// GT of highest IoU in its image when that IoU >= iou_thresh.
EvalReport ap50(const std::vector<EvalImage>& images, int num_classes, float iou_thresh = 0.5f);

struct PcaResult {
    Tensor<double> projected;          // {n, k}
    Tensor<double> components;         // {k, d}, orthonormal rows
    std::vector<double> explained_ratio;  // descending, sums to <= 1
    int rank = 0;
    bool padded = false;  // rank < k: missing directions are zero, warned on stderr
};

// Mean-centered projection onto the top-k principal directions (SVD route).
PcaResult pca_projection(const Tensor<double>& features, int k = 2);

}  // namespace dadet
