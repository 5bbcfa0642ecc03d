// Python bindings for the alignment math and evaluation entry points.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dadet/data.hpp"
#include "dadet/evalmetrics.hpp"
#include "dadet/objective.hpp"
#include "dadet/params.hpp"
#include "dadet/pdfa.hpp"
#include "dadet/ufoa.hpp"

namespace py = pybind11;
using namespace dadet;

namespace {

using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<float> tensor_from(const FArray& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    Tensor<float> t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

Tensor<double> dtensor_from(const DArray& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    Tensor<double> t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

template <typename T>
py::array_t<T> array_from(const Tensor<T>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<T> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

std::vector<Box> boxes_from(const FArray& a) {
    if (a.ndim() != 2 || a.shape(1) != 4) throw ArgumentError("boxes must be an (N, 4) array");
    std::vector<Box> out(static_cast<size_t>(a.shape(0)));
    for (py::ssize_t i = 0; i < a.shape(0); ++i)
        out[static_cast<size_t>(i)] = {a.at(i, 0), a.at(i, 1), a.at(i, 2), a.at(i, 3)};
    return out;
}

}  // namespace

PYBIND11_MODULE(_dadet, m) {
    m.doc() = "differential feature alignment core operations";

    m.def(
        "apply_fog",
        [](const FArray& pixels, const FArray& beta, float airlight, const FArray& depth) {
            return array_from(apply_fog(tensor_from(pixels), tensor_from(beta), airlight,
                                        tensor_from(depth)));
        },
        py::arg("pixels"), py::arg("beta"), py::arg("airlight"), py::arg("depth"),
        "Atmospheric scattering: I*t + A*(1-t) with t = exp(-beta*depth); pixels are (3, H, W).");

    m.def(
        "prediction_discrepancy",
        [](const FArray& p_t, const FArray& p_s) {
            return array_from(prediction_discrepancy(tensor_from(p_t), tensor_from(p_s)));
        },
        py::arg("p_teacher"), py::arg("p_student"),
        "Elementwise squared difference of two (N, C') probability matrices.");

    m.def(
        "instance_weights",
        [](const FArray& p_div) {
            auto w = instance_weights(tensor_from(p_div));
            return py::make_tuple(py::cast(w.raw), py::cast(w.normalized), w.degenerate);
        },
        py::arg("p_div"), "Row means then min-max; returns (raw, normalized, degenerate).");

    m.def(
        "foreground_mask",
        [](const FArray& boxes, int img_w, int img_h, int stride) {
            ForegroundMask fm = build_mask(boxes_from(boxes), img_w, img_h, stride, false);
            py::array_t<std::uint8_t> a({fm.h, fm.w});
            std::copy(fm.m.begin(), fm.m.end(), a.mutable_data());
            return a;
        },
        py::arg("boxes"), py::arg("img_w"), py::arg("img_h"), py::arg("stride") = 4,
        "Cell-center-inside-box union mask at feature stride.");

    m.def(
        "split_features",
        [](const FArray& fmap, const FArray& boxes, int stride) {
            Tensor<float> f = tensor_from(fmap);
            ForegroundMask fm = build_mask(boxes_from(boxes), f.dim(2) * stride, f.dim(1) * stride,
                                           stride, false);
            auto s = split_features(f, fm);
            return py::make_tuple(array_from(s.fg), array_from(s.bg));
        },
        py::arg("fmap"), py::arg("boxes"), py::arg("stride") = 4,
        "Exact foreground/background split of a (C, H2, W2) map.");

    m.def("combine", &combine<float>, py::arg("loss_fg"), py::arg("loss_bg"), py::arg("gamma"),
          "gamma*loss_fg + (1-gamma)*loss_bg.");

    m.def(
        "iou", [](const FArray& a, const FArray& b) {
            auto va = boxes_from(a), vb = boxes_from(b);
            py::array_t<float> out({static_cast<py::ssize_t>(va.size()),
                                    static_cast<py::ssize_t>(vb.size())});
            auto w = out.mutable_unchecked<2>();
            for (size_t i = 0; i < va.size(); ++i)
                for (size_t j = 0; j < vb.size(); ++j)
                    w(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = iou(va[i], vb[j]);
            return out;
        },
        py::arg("boxes_a"), py::arg("boxes_b"), "Pairwise IoU matrix.");

    m.def(
        "ema_update",
        [](const FArray& teacher, const FArray& student, float alpha) {
            Tensor<float> t = tensor_from(teacher), s = tensor_from(student);
            if (t.shape != s.shape) throw ArgumentError("ema_update: shape mismatch");
            for (size_t i = 0; i < t.data.size(); ++i)
                t.data[i] = alpha * t.data[i] + (1.f - alpha) * s.data[i];
            return array_from(t);
        },
        py::arg("teacher"), py::arg("student"), py::arg("alpha"),
        "alpha*teacher + (1-alpha)*student, elementwise.");

    m.def(
        "ap50",
        [](const std::vector<std::pair<FArray, FArray>>& images, int num_classes,
           float iou_thresh) {
            std::vector<EvalImage> evals;
            for (const auto& [dets, gts] : images) {
                if (dets.ndim() != 2 || (dets.shape(0) > 0 && dets.shape(1) != 6))
                    throw ArgumentError("detections must be (N, 6): x1,y1,x2,y2,label,score");
                if (gts.ndim() != 2 || (gts.shape(0) > 0 && gts.shape(1) != 5))
                    throw ArgumentError("ground truth must be (M, 5): x1,y1,x2,y2,label");
                EvalImage e;
                for (py::ssize_t i = 0; i < dets.shape(0); ++i) {
                    e.dets.boxes.push_back({dets.at(i, 0), dets.at(i, 1), dets.at(i, 2), dets.at(i, 3)});
                    e.dets.labels.push_back(static_cast<int>(dets.at(i, 4)));
                    e.dets.scores.push_back(dets.at(i, 5));
                }
                for (py::ssize_t i = 0; i < gts.shape(0); ++i) {
                    e.gt_boxes.push_back({gts.at(i, 0), gts.at(i, 1), gts.at(i, 2), gts.at(i, 3)});
                    e.gt_labels.push_back(static_cast<int>(gts.at(i, 4)));
                }
                evals.push_back(std::move(e));
            }
            EvalReport r = ap50(evals, num_classes, iou_thresh);
            py::dict d;
            d["per_class_ap"] = r.per_class_ap;
            d["per_class_gt"] = r.per_class_gt;
            d["map50"] = r.map50;
            d["total_gt"] = r.total_gt;
            d["total_dets"] = r.total_dets;
            return d;
        },
        py::arg("images"), py::arg("num_classes"), py::arg("iou_thresh") = 0.5f,
        "AP at an IoU threshold from [(detections, ground_truth), ...] pairs.");

    m.def(
        "pca_projection",
        [](const DArray& feats, int k) {
            PcaResult r = pca_projection(dtensor_from(feats), k);
            return py::make_tuple(array_from(r.projected), array_from(r.components),
                                  py::cast(r.explained_ratio), r.rank);
        },
        py::arg("features"), py::arg("k") = 2,
        "Centered SVD projection; returns (projected, components, explained_ratio, rank).");
}
