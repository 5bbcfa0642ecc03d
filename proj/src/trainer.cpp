#include "dadet/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "dadet/checkpoint.hpp"
#include "dadet/pdfa.hpp"
#include "dadet/targets.hpp"
#include "dadet/ufoa.hpp"

namespace dadet {

void TrainConfig::validate() const {
    if (!(alpha >= 0.f && alpha <= 1.f)) throw ConfigError("alpha outside [0,1]");
    if (lambda < 0.f) throw ConfigError("lambda must be non-negative");
    if (!(gamma >= 0.f && gamma <= 1.f)) throw ConfigError("gamma outside [0,1]");
    // tau = 1 is the meaningful endpoint: no pseudo label ever clears it
    if (!(tau > 0.f && tau <= 1.f)) throw ConfigError("tau outside (0,1]");
    if (burn_in_iters < 0) throw ConfigError("burn_in_iters must be >= 0");
    // equality is allowed: such a run is all burn-in (source-only training)
    if (burn_in_iters > total_iters) throw ConfigError("burn_in_iters must be <= total_iters");
    if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
    if (lr <= 0.f) throw ConfigError("lr must be positive");
    if (batch_source < 1 || batch_target < 1) throw ConfigError("batch sizes must be >= 1");
    if (rois_per_image < 1) throw ConfigError("rois_per_image must be >= 1");
    if (aug.mask_ratio < 0.f || aug.mask_ratio > 1.f) throw ConfigError("mask_ratio outside [0,1]");
}

namespace {

// Splits a pooled {M, D} gradient back into per-pass blocks.
Tensor<float> slice_rows(const Tensor<float>& m, int row0, int rows) {
    Tensor<float> out({rows, m.dim(1)});
    std::copy(m.data.begin() + static_cast<long>(row0) * m.dim(1),
              m.data.begin() + static_cast<long>(row0 + rows) * m.dim(1), out.data.begin());
    return out;
}

double grad_norm(GradStore<float>& gs, int count) {
    double s = 0.0;
    for (int i = 0; i < count; ++i)
        for (float v : gs[i].data) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

}  // namespace

struct Trainer::StudentPass {
    bool is_source = false;
    bool has_rois = false;
    bool has_det_loss = false;  // supervised or pseudo-supervised this step
    Tensor<float> view;
    BackboneCtx<float> bctx;
    Pyramid<float> pyr;
    RpnCtx<float> rctx;
    RpnOut<float> rpn;
    std::vector<Box> sup_boxes;  // ground truth (source) or pseudo labels (target)
    std::vector<int> sup_labels;
    std::vector<Box> rois;
    RoiAlignCtx<float> actx;
    RoiHeadCtx<float> hctx;
    RoiHeadOut<float> head;
    RpnTargets rpn_tgt;
    RoiTargets roi_tgt;
    RpnLoss<float> rpn_loss_out;
    DetectionLoss<float> det_loss_out;
    float det_scale = 0.f;  // 1/batch for the detection-loss gradients
    Tensor<float> dfeat;    // extractor-side gradient from the instance discriminator
    Tensor<float> dp2_adv;  // extractor-side gradient from the image discriminator
    // image-discriminator bookkeeping
    ImgDiscCtx<float> d2_fg_ctx, d2_bg_ctx, d2_whole_ctx;
    float d2_fg_logit = 0.f, d2_bg_logit = 0.f, d2_whole_logit = 0.f;
    bool has_fg = false, has_bg = false, has_whole = false;
    ForegroundMask mask;
};

Trainer::Trainer(TrainConfig cfg, std::vector<AnnotatedImage> source_train,
                 std::vector<AnnotatedImage> target_train)
    : cfg_(cfg),
      source_(std::move(source_train)),
      target_(std::move(target_train)),
      det_(cfg.det),
      discnet_(DiscriminatorCfg{cfg.det.fc_dim, 128, 64, cfg.det.fpn_ch, 8}),
      student_([&] {
          ParamStore<float> ps;
          Rng rng(cfg.seed, "init_student");
          Detector<float>(cfg.det).build_params(ps, rng);
          return ps;
      }()),
      teacher_([&] {
          ParamStore<float> ps;
          Rng rng(cfg.seed, "init_student");  // same names/shapes; values replaced on activation
          Detector<float>(cfg.det).build_params(ps, rng);
          return ps;
      }()),
      disc_([&] {
          ParamStore<float> ps;
          Rng rng(cfg.seed, "init_disc");
          Discriminators<float>(DiscriminatorCfg{cfg.det.fc_dim, 128, 64, cfg.det.fpn_ch, 8})
              .build_params(ps, rng);
          return ps;
      }()),
      s_grads_(student_),
      d_grads_(disc_),
      s_opt_(student_),
      d_opt_(disc_) {
    cfg_.validate();
    if (source_.empty()) throw ConfigError("Trainer: empty source dataset");
    bool needs_target = cfg_.mode == RunMode::baseline || cfg_.total_iters > cfg_.burn_in_iters;
    if (needs_target && target_.empty()) throw ConfigError("Trainer: empty target dataset");
    s_opt_.lr = cfg_.lr;
    s_opt_.momentum = cfg_.momentum;
    d_opt_.lr = cfg_.lr;
    d_opt_.momentum = cfg_.momentum;
    if (cfg_.mode == RunMode::baseline) {
        copy_params(teacher_, student_, Writer::Load);
        teacher_active_ = true;
    }
}

const char* Trainer::phase_at(long iter) const {
    if (cfg_.mode == RunMode::baseline) return "baseline";
    return iter < cfg_.burn_in_iters ? "burn_in" : "mutual";
}

const char* Trainer::phase_name() const { return phase_at(iter_); }

Tensor<float> Trainer::augmented_view(const AnnotatedImage& img, bool strong, const char* tag,
                                      long ordinal) const {
    Rng rng(cfg_.seed, tag, static_cast<std::uint64_t>(ordinal));
    return strong ? strong_augment(img.pixels, img.domain, cfg_.aug, rng)
                  : weak_augment(img.pixels, cfg_.aug, rng);
}

std::vector<int> Trainer::sample_batch(const std::vector<AnnotatedImage>& set, int count,
                                       const char* tag) const {
    Rng rng(cfg_.seed, tag, static_cast<std::uint64_t>(iter_));
    std::vector<int> idx(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = rng.uniform_int(0, static_cast<int>(set.size()) - 1);
    return idx;
}

void Trainer::maybe_decay_lr() {
    if (cfg_.lr_decay_iter >= 0 && iter_ == cfg_.lr_decay_iter) {
        s_opt_.lr *= cfg_.lr_decay_factor;
        d_opt_.lr *= cfg_.lr_decay_factor;
    }
}

void Trainer::step() {
    const bool burn_in = cfg_.mode == RunMode::full && iter_ < cfg_.burn_in_iters;
    const bool mutual = cfg_.mode == RunMode::full && !burn_in;
    const bool aligned = cfg_.mode == RunMode::baseline;
    const bool adv_active = mutual || aligned;
    const long ord_base = iter_ * 4096;  // augmentation substream base for this iteration

    maybe_decay_lr();
    s_grads_.zero();
    d_grads_.zero();

    IterationLog row;
    row.iter = iter_;
    row.phase = phase_at(iter_);
    row.lr = s_opt_.lr;

    // ---- batch selection ----
    std::vector<int> src_idx = sample_batch(source_, cfg_.batch_source, "batch_src");
    std::vector<int> tgt_idx;
    if (!burn_in) tgt_idx = sample_batch(target_, cfg_.batch_target, "batch_tgt");

    // ---- teacher forwards (no gradients anywhere on this side) ----
    const bool need_pseudo = mutual || (aligned && cfg_.ufoa_on);
    const bool need_teacher_pyr = adv_active && cfg_.pdfa_on;
    struct TeacherView {
        Pyramid<float> pyr;
        std::vector<Box> pseudo_boxes;
        std::vector<int> pseudo_labels;
    };
    std::vector<TeacherView> t_tgt(tgt_idx.size());
    std::vector<Pyramid<float>> t_src;
    if (adv_active && (need_pseudo || need_teacher_pyr)) {
        for (size_t k = 0; k < tgt_idx.size(); ++k) {
            const auto& img = target_[static_cast<size_t>(tgt_idx[k])];
            Tensor<float> view = augmented_view(img, false, "t_tgt", ord_base + static_cast<long>(k));
            t_tgt[k].pyr = det_.backbone_forward(teacher_, view, nullptr);
            if (need_pseudo) {
                Detections dets = det_.detect_on_pyramid(teacher_, t_tgt[k].pyr, cfg_.tau,
                                                         cfg_.eval_nms_thresh, cfg_.eval_k_max);
                t_tgt[k].pseudo_boxes = dets.boxes;
                t_tgt[k].pseudo_labels = dets.labels;
                row.num_pseudo += static_cast<int>(dets.boxes.size());
            }
        }
        if (need_teacher_pyr) {
            t_src.resize(src_idx.size());
            for (size_t k = 0; k < src_idx.size(); ++k) {
                const auto& img = source_[static_cast<size_t>(src_idx[k])];
                Tensor<float> view = augmented_view(img, false, "t_src", ord_base + static_cast<long>(k));
                t_src[k] = det_.backbone_forward(teacher_, view, nullptr);
            }
        }
    }

    // ---- student forwards ----
    std::vector<StudentPass> passes;
    passes.reserve(src_idx.size() + tgt_idx.size());
    auto student_forward = [&](const AnnotatedImage& img, bool is_source, const char* tag, long ord,
                               const std::vector<Box>& sup_boxes, const std::vector<int>& sup_labels,
                               bool with_det_loss) {
        StudentPass p;
        p.is_source = is_source;
        p.sup_boxes = sup_boxes;
        p.sup_labels = sup_labels;
        bool strong = !burn_in && cfg_.strong_aug_on;
        p.view = augmented_view(img, strong, tag, ord);
        p.pyr = det_.backbone_forward(student_, p.view, &p.bctx);
        p.rpn = det_.rpn_forward(student_, p.pyr.p2, &p.rctx);
        ProposalSet props = det_.propose(p.rpn, p.pyr.img_h, p.pyr.img_w, cfg_.rois_per_image,
                                         cfg_.rpn_nms_thresh);
        p.rois = build_train_rois(props, p.sup_boxes, cfg_.rois_per_image);
        p.has_rois = !p.rois.empty();
        if (p.has_rois) {
            Tensor<float> feats = det_.roi_align(p.pyr.p2, p.rois, &p.actx);
            p.head = det_.roi_head(student_, feats, &p.hctx);
        }
        p.has_det_loss = with_det_loss && p.has_rois && !p.sup_boxes.empty();
        passes.push_back(std::move(p));
    };

    for (size_t k = 0; k < src_idx.size(); ++k) {
        const auto& img = source_[static_cast<size_t>(src_idx[k])];
        student_forward(img, true, "s_src", ord_base + static_cast<long>(k), img.boxes(), img.labels(),
                        true);
    }
    for (size_t k = 0; k < tgt_idx.size(); ++k) {
        const auto& img = target_[static_cast<size_t>(tgt_idx[k])];
        // pseudo labels stand in for annotations; target ground truth stays sealed
        student_forward(img, false, "s_tgt", ord_base + static_cast<long>(k), t_tgt[k].pseudo_boxes,
                        t_tgt[k].pseudo_labels, mutual);
    }

    // ---- detection losses ----
    float sup = 0.f, unsup = 0.f;
    long pass_ord = 0;
    for (auto& p : passes) {
        ++pass_ord;
        if (!p.has_det_loss) continue;
        float inv_batch = 1.f / static_cast<float>(p.is_source ? cfg_.batch_source : cfg_.batch_target);
        Rng rng(cfg_.seed, p.is_source ? "rpn_src" : "rpn_tgt",
                static_cast<std::uint64_t>(ord_base + pass_ord));
        auto anchors = det_.anchors_for(p.rpn.obj_logits.dim(1), p.rpn.obj_logits.dim(2));
        p.rpn_tgt = rpn_targets(anchors, p.sup_boxes, rng);
        p.rpn_loss_out = rpn_loss(p.rpn, p.rpn_tgt, cfg_.det.num_anchors());
        p.roi_tgt = roi_targets(p.rois, p.sup_boxes, p.sup_labels, cfg_.det.num_classes);
        p.det_loss_out = detection_loss(p.head.cls_logits, p.head.box_deltas, p.roi_tgt);
        p.det_scale = inv_batch;
        float v = (p.rpn_loss_out.obj + p.rpn_loss_out.reg + detection_loss_value(p.det_loss_out)) *
                  inv_batch;
        (p.is_source ? sup : unsup) += v;
    }

    // ---- instance alignment (D1 on the pooled proposal features) ----
    float adv_ins = 0.f;
    if (adv_active) {
        std::vector<StudentPass*> carriers;
        int total_rows = 0;
        for (auto& p : passes)
            if (p.has_rois) {
                carriers.push_back(&p);
                total_rows += p.head.features.dim(0);
            }
        if (total_rows > 0) {
            Tensor<float> pooled({total_rows, cfg_.det.fc_dim});
            std::vector<int> flags(static_cast<size_t>(total_rows));
            Tensor<float> p_s({total_rows, cfg_.det.num_columns()});
            Tensor<float> p_t({total_rows, cfg_.det.num_columns()});
            int r0 = 0;
            for (size_t c = 0; c < carriers.size(); ++c) {
                StudentPass& p = *carriers[c];
                int rows = p.head.features.dim(0);
                std::copy(p.head.features.data.begin(), p.head.features.data.end(),
                          pooled.data.begin() + static_cast<long>(r0) * cfg_.det.fc_dim);
                std::fill(flags.begin() + r0, flags.begin() + r0 + rows, p.is_source ? 1 : 0);
                if (cfg_.pdfa_on) {
                    std::copy(p.head.cls_probs.data.begin(), p.head.cls_probs.data.end(),
                              p_s.data.begin() + static_cast<long>(r0) * cfg_.det.num_columns());
                    // teacher predictions on the student's proposals, weak view
                    const Pyramid<float>* tp = nullptr;
                    int local = 0;
                    for (size_t k = 0; k < passes.size(); ++k)
                        if (&passes[k] == &p) local = static_cast<int>(k);
                    if (p.is_source)
                        tp = &t_src[static_cast<size_t>(local)];
                    else
                        tp = &t_tgt[static_cast<size_t>(local - src_idx.size())].pyr;
                    Tensor<float> tfeats = det_.roi_align(tp->p2, p.rois, nullptr);
                    RoiHeadOut<float> thead = det_.roi_head(teacher_, tfeats, nullptr);
                    std::copy(thead.cls_probs.data.begin(), thead.cls_probs.data.end(),
                              p_t.data.begin() + static_cast<long>(r0) * cfg_.det.num_columns());
                }
                r0 += rows;
            }

            std::vector<float> w_tilde(static_cast<size_t>(total_rows), 1.f);
            if (cfg_.pdfa_on) {
                auto weights = instance_weights(prediction_discrepancy(p_t, p_s));
                w_tilde = weights.normalized;
                row.weights_degenerate = weights.degenerate ? 1 : 0;
            }

            InsDiscCtx<float> d1_ctx;
            Tensor<float> logits = discnet_.ins_forward(disc_, pooled, &d1_ctx);
            auto loss = instance_adversarial_loss(logits, flags, w_tilde);
            adv_ins = loss.loss;
            // discriminator side: plain BCE gradients
            Tensor<float> dpooled = discnet_.ins_backward(disc_, d1_ctx, loss.dlogits, d_grads_);
            // extractor side: gradient reversal
            Tensor<float> dpooled_rev = gradient_reversal_backward(dpooled, cfg_.lambda);
            r0 = 0;
            for (StudentPass* p : carriers) {
                int rows = p->head.features.dim(0);
                p->dfeat = slice_rows(dpooled_rev, r0, rows);
                r0 += rows;
            }
        }
    }

    // ---- image alignment (D2 on P2, foreground-split or whole-map) ----
    float adv_img = 0.f;
    if (adv_active) {
        if (cfg_.ufoa_on) {
            int n_fg = 0, n_bg = 0;
            double l_fg = 0.0, l_bg = 0.0;
            for (auto& p : passes) {
                p.mask = build_mask(p.sup_boxes, p.pyr.img_w, p.pyr.img_h, cfg_.det.s2, !p.is_source);
                long cells = static_cast<long>(p.mask.h) * p.mask.w;
                auto split = split_features(p.pyr.p2, p.mask);
                if (p.mask.popcount() > 0) {
                    p.d2_fg_logit = discnet_.img_forward(disc_, split.fg, &p.d2_fg_ctx);
                    p.has_fg = true;
                    ++n_fg;
                }
                if (p.mask.popcount() < cells) {
                    p.d2_bg_logit = discnet_.img_forward(disc_, split.bg, &p.d2_bg_ctx);
                    p.has_bg = true;
                    ++n_bg;
                }
            }
            for (auto& p : passes) {
                float d = p.is_source ? 1.f : 0.f;
                if (p.has_fg) {
                    float dl;
                    l_fg += adv_bce(p.d2_fg_logit, d, &dl, static_cast<long*>(nullptr)) / std::max(1, n_fg);
                    float scaled = cfg_.gamma * dl / std::max(1, n_fg);
                    Tensor<float> dfg = discnet_.img_backward(disc_, p.d2_fg_ctx, scaled, d_grads_);
                    Tensor<float> masked = mask_gradient(dfg, p.mask, true);
                    p.dp2_adv = gradient_reversal_backward(masked, cfg_.lambda);
                }
                if (p.has_bg) {
                    float dl;
                    l_bg += adv_bce(p.d2_bg_logit, d, &dl, static_cast<long*>(nullptr)) / std::max(1, n_bg);
                    float scaled = (1.f - cfg_.gamma) * dl / std::max(1, n_bg);
                    Tensor<float> dbg = discnet_.img_backward(disc_, p.d2_bg_ctx, scaled, d_grads_);
                    Tensor<float> masked = mask_gradient(dbg, p.mask, false);
                    Tensor<float> rev = gradient_reversal_backward(masked, cfg_.lambda);
                    if (p.dp2_adv.empty())
                        p.dp2_adv = std::move(rev);
                    else
                        for (size_t i = 0; i < rev.data.size(); ++i) p.dp2_adv.data[i] += rev.data[i];
                }
            }
            adv_img = combine(static_cast<float>(l_fg), static_cast<float>(l_bg), cfg_.gamma);
        } else {
            // whole-map alignment, no mask
            int n = static_cast<int>(passes.size());
            double total = 0.0;
            for (auto& p : passes) {
                p.d2_whole_logit = discnet_.img_forward(disc_, p.pyr.p2, &p.d2_whole_ctx);
                p.has_whole = true;
            }
            for (auto& p : passes) {
                float d = p.is_source ? 1.f : 0.f;
                float dl;
                total += adv_bce(p.d2_whole_logit, d, &dl, static_cast<long*>(nullptr)) / std::max(1, n);
                Tensor<float> dmap =
                    discnet_.img_backward(disc_, p.d2_whole_ctx, dl / std::max(1, n), d_grads_);
                p.dp2_adv = gradient_reversal_backward(dmap, cfg_.lambda);
            }
            adv_img = static_cast<float>(total);
        }
    }

    // ---- assemble the objective (and the NaN-abort test hook) ----
    if (iter_ == cfg_.nan_inject_iter) sup = std::numeric_limits<float>::infinity();
    LossBundle<float> bundle;
    try {
        bundle = total_objective(sup, unsup, adv_ins, adv_img, cfg_.lambda);
    } catch (const NanAbort& e) {
        std::ostringstream diag;
        diag << "iteration=" << iter_ << " phase=" << phase_at(iter_) << " sup=" << sup
             << " unsup=" << unsup << " adv_ins=" << adv_ins << " adv_img=" << adv_img
             << " |grad_student|=" << grad_norm(s_grads_, student_.count())
             << " |grad_disc|=" << grad_norm(d_grads_, disc_.count());
        throw NanAbort(e.what(), diag.str());
    }

    // ---- student backward ----
    for (auto& p : passes) {
        Tensor<float> dp2({cfg_.det.fpn_ch, p.pyr.p2.dim(1), p.pyr.p2.dim(2)});
        if (p.has_rois) {
            Tensor<float> dcls(p.head.cls_logits.shape);
            Tensor<float> dbox(p.head.box_deltas.shape);
            if (p.has_det_loss) {
                for (size_t i = 0; i < dcls.data.size(); ++i)
                    dcls.data[i] = p.det_loss_out.dcls_logits.data[i] * p.det_scale;
                for (size_t i = 0; i < dbox.data.size(); ++i)
                    dbox.data[i] = p.det_loss_out.dbox_deltas.data[i] * p.det_scale;
            }
            const Tensor<float>* dfeat = p.dfeat.empty() ? nullptr : &p.dfeat;
            Tensor<float> droi = det_.roi_head_backward(student_, p.hctx, dcls, dbox, dfeat, s_grads_);
            Tensor<float> dp2_roi = det_.roi_align_backward(p.actx, droi);
            for (size_t i = 0; i < dp2.data.size(); ++i) dp2.data[i] += dp2_roi.data[i];
        }
        if (p.has_det_loss) {
            Tensor<float> dobj(p.rpn_loss_out.dobj.shape);
            Tensor<float> ddelta(p.rpn_loss_out.ddelta.shape);
            for (size_t i = 0; i < dobj.data.size(); ++i)
                dobj.data[i] = p.rpn_loss_out.dobj.data[i] * p.det_scale;
            for (size_t i = 0; i < ddelta.data.size(); ++i)
                ddelta.data[i] = p.rpn_loss_out.ddelta.data[i] * p.det_scale;
            Tensor<float> dp2_rpn = det_.rpn_backward(student_, p.rctx, dobj, ddelta, s_grads_);
            for (size_t i = 0; i < dp2.data.size(); ++i) dp2.data[i] += dp2_rpn.data[i];
        }
        if (!p.dp2_adv.empty())
            for (size_t i = 0; i < dp2.data.size(); ++i) dp2.data[i] += p.dp2_adv.data[i];
        det_.backbone_backward(student_, p.bctx, dp2, s_grads_);
    }

    // ---- updates ----
    s_opt_.step(student_, s_grads_);
    if (adv_active) d_opt_.step(disc_, d_grads_);
    if (teacher_active_) ema_update(teacher_, student_, cfg_.alpha);

    row.losses = bundle;
    log_.push_back(row);
    ++iter_;

    // teacher initialization at the burn-in -> mutual transition
    if (cfg_.mode == RunMode::full && iter_ == cfg_.burn_in_iters && !teacher_active_) {
        copy_params(teacher_, student_, Writer::Load);
        teacher_active_ = true;
    }
}

void Trainer::run(const std::function<void(const IterationLog&)>& on_iter) {
    while (iter_ < cfg_.total_iters) {
        step();
        if (on_iter) on_iter(log_.back());
    }
}

Detections Trainer::detect_with(const ParamStore<float>& params, const Tensor<float>& pixels) const {
    return det_.detect(params, pixels, cfg_.eval_score_thresh, cfg_.eval_nms_thresh, cfg_.eval_k_max);
}

EvalReport Trainer::evaluate(const ParamStore<float>& params,
                             const std::vector<AnnotatedImage>& dataset) const {
    std::vector<EvalImage> evals;
    evals.reserve(dataset.size());
    for (const auto& img : dataset) {
        EvalImage e;
        e.dets = detect_with(params, img.pixels);
        e.gt_boxes = img.boxes_eval();
        e.gt_labels = img.labels_eval();
        evals.push_back(std::move(e));
    }
    return ap50(evals, cfg_.det.num_classes);
}

Tensor<double> Trainer::pooled_features(const ParamStore<float>& params,
                                        const std::vector<AnnotatedImage>& dataset) const {
    const int d = cfg_.det.fpn_ch;
    Tensor<double> out({static_cast<int>(dataset.size()), d});
    for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
        Pyramid<float> pyr = det_.backbone_forward(params, dataset[static_cast<size_t>(i)].pixels, nullptr);
        const long plane = static_cast<long>(pyr.p2.dim(1)) * pyr.p2.dim(2);
        for (int c = 0; c < d; ++c) {
            double s = 0.0;
            for (long j = 0; j < plane; ++j)
                s += pyr.p2.data[static_cast<size_t>(c) * plane + static_cast<size_t>(j)];
            out.at(i, c) = s / static_cast<double>(plane);
        }
    }
    return out;
}

PdfaSemanticResult Trainer::pdfa_fog_correlation(const std::vector<AnnotatedImage>& target_images,
                                                 int max_images, std::uint64_t seed) const {
    const int n = std::min<int>(max_images, static_cast<int>(target_images.size()));
    struct Prop {
        int image;
        float cx, cy;
    };
    std::vector<Prop> props_all;
    std::vector<std::array<float, 2>> quartiles(static_cast<size_t>(n));  // {Q1, Q3} per image

    std::vector<float> pooled_pt, pooled_ps;
    int total_rows = 0;
    const int cols = cfg_.det.num_columns();

    for (int i = 0; i < n; ++i) {
        const auto& img = target_images[static_cast<size_t>(i)];
        if (img.fog_density.empty())
            throw ArgumentError("pdfa_fog_correlation: target image lacks a fog-density field");
        Rng trng(seed, "diag_t", static_cast<std::uint64_t>(i));
        Rng srng(seed, "diag_s", static_cast<std::uint64_t>(i));
        Tensor<float> t_view = weak_augment(img.pixels, cfg_.aug, trng);
        Tensor<float> s_view = cfg_.strong_aug_on
                                   ? strong_augment(img.pixels, img.domain, cfg_.aug, srng)
                                   : weak_augment(img.pixels, cfg_.aug, srng);

        Pyramid<float> t_pyr = det_.backbone_forward(teacher_, t_view, nullptr);
        Detections pseudo = det_.detect_on_pyramid(teacher_, t_pyr, cfg_.tau, cfg_.eval_nms_thresh,
                                                   cfg_.eval_k_max);

        Pyramid<float> s_pyr = det_.backbone_forward(student_, s_view, nullptr);
        RpnOut<float> rpn = det_.rpn_forward(student_, s_pyr.p2, nullptr);
        ProposalSet ps = det_.propose(rpn, s_pyr.img_h, s_pyr.img_w, cfg_.rois_per_image,
                                      cfg_.rpn_nms_thresh);
        std::vector<Box> rois = build_train_rois(ps, pseudo.boxes, cfg_.rois_per_image);
        if (rois.empty()) continue;

        Tensor<float> sfeats = det_.roi_align(s_pyr.p2, rois, nullptr);
        RoiHeadOut<float> shead = det_.roi_head(student_, sfeats, nullptr);
        Tensor<float> tfeats = det_.roi_align(t_pyr.p2, rois, nullptr);
        RoiHeadOut<float> thead = det_.roi_head(teacher_, tfeats, nullptr);

        for (const Box& b : rois) props_all.push_back({i, b.cx(), b.cy()});
        for (float v : thead.cls_probs.data) pooled_pt.push_back(v);
        for (float v : shead.cls_probs.data) pooled_ps.push_back(v);
        total_rows += static_cast<int>(rois.size());

        // per-image fog quartiles over P2 cells (average-pooled density)
        const int s2 = cfg_.det.s2;
        const int h2 = (img.height() + s2 - 1) / s2, w2 = (img.width() + s2 - 1) / s2;
        std::vector<float> cells;
        cells.reserve(static_cast<size_t>(h2) * w2);
        for (int cy = 0; cy < h2; ++cy) {
            for (int cx = 0; cx < w2; ++cx) {
                double s = 0.0;
                int cnt = 0;
                for (int y = cy * s2; y < std::min(img.height(), (cy + 1) * s2); ++y)
                    for (int x = cx * s2; x < std::min(img.width(), (cx + 1) * s2); ++x) {
                        s += img.fog_density.at(y, x);
                        ++cnt;
                    }
                cells.push_back(static_cast<float>(s / std::max(1, cnt)));
            }
        }
        std::vector<float> sorted = cells;
        std::sort(sorted.begin(), sorted.end());
        quartiles[static_cast<size_t>(i)] = {sorted[sorted.size() / 4],
                                             sorted[(3 * sorted.size()) / 4]};
    }

    PdfaSemanticResult res;
    if (total_rows == 0) return res;
    Tensor<float> pt({total_rows, cols}), psr({total_rows, cols});
    pt.data = std::move(pooled_pt);
    psr.data = std::move(pooled_ps);
    auto weights = instance_weights(prediction_discrepancy(pt, psr));

    const int s2 = cfg_.det.s2;
    for (int k = 0; k < total_rows; ++k) {
        const Prop& pr = props_all[static_cast<size_t>(k)];
        const auto& img = target_images[static_cast<size_t>(pr.image)];
        int h2 = (img.height() + s2 - 1) / s2, w2 = (img.width() + s2 - 1) / s2;
        int cx = std::min(w2 - 1, std::max(0, static_cast<int>(pr.cx / s2)));
        int cy = std::min(h2 - 1, std::max(0, static_cast<int>(pr.cy / s2)));
        // recompute the cell's pooled density
        double s = 0.0;
        int cnt = 0;
        for (int y = cy * s2; y < std::min(img.height(), (cy + 1) * s2); ++y)
            for (int x = cx * s2; x < std::min(img.width(), (cx + 1) * s2); ++x) {
                s += img.fog_density.at(y, x);
                ++cnt;
            }
        float dens = static_cast<float>(s / std::max(1, cnt));
        float w = weights.normalized[static_cast<size_t>(k)];
        if (dens >= quartiles[static_cast<size_t>(pr.image)][1]) {
            res.mean_top += w;
            ++res.n_top;
        } else if (dens <= quartiles[static_cast<size_t>(pr.image)][0]) {
            res.mean_bottom += w;
            ++res.n_bottom;
        }
    }
    if (res.n_top > 0) res.mean_top /= static_cast<double>(res.n_top);
    if (res.n_bottom > 0) res.mean_bottom /= static_cast<double>(res.n_bottom);
    return res;
}

void Trainer::save_checkpoint(const std::string& path) const {
    Archive a;
    a.meta["format"] = "dadet-checkpoint";
    a.meta["iteration"] = std::to_string(iter_);
    a.meta["teacher_active"] = teacher_active_ ? "1" : "0";
    char lr_buf[32];
    std::snprintf(lr_buf, sizeof(lr_buf), "%.9g", static_cast<double>(s_opt_.lr));
    a.meta["lr"] = lr_buf;
    for (int i = 0; i < student_.count(); ++i) a.arrays["student." + student_.name(i)] = student_.tensor(i);
    for (int i = 0; i < teacher_.count(); ++i) a.arrays["teacher." + teacher_.name(i)] = teacher_.tensor(i);
    for (int i = 0; i < disc_.count(); ++i) a.arrays["disc." + disc_.name(i)] = disc_.tensor(i);
    for (int i = 0; i < student_.count(); ++i)
        a.arrays["vel.student." + student_.name(i)] = s_opt_.velocity[static_cast<size_t>(i)];
    for (int i = 0; i < disc_.count(); ++i)
        a.arrays["vel.disc." + disc_.name(i)] = d_opt_.velocity[static_cast<size_t>(i)];
    write_archive(path, a);
}

void Trainer::load_checkpoint(const std::string& path) {
    Archive a = read_archive(path);
    auto need = [&](const std::string& key) -> const Tensor<float>& {
        auto it = a.arrays.find(key);
        if (it == a.arrays.end()) throw IoError("load_checkpoint: missing array " + key + " in " + path);
        return it->second;
    };
    auto restore = [&](ParamStore<float>& store, const std::string& prefix) {
        for (int i = 0; i < store.count(); ++i) {
            const Tensor<float>& src = need(prefix + store.name(i));
            auto& dst = store.mutable_tensor(i, Writer::Load);
            if (src.shape != dst.shape)
                throw StructuralError("load_checkpoint: shape mismatch for " + prefix + store.name(i));
            dst.data = src.data;
        }
    };
    restore(student_, "student.");
    restore(teacher_, "teacher.");
    restore(disc_, "disc.");
    for (int i = 0; i < student_.count(); ++i)
        s_opt_.velocity[static_cast<size_t>(i)].data = need("vel.student." + student_.name(i)).data;
    for (int i = 0; i < disc_.count(); ++i)
        d_opt_.velocity[static_cast<size_t>(i)].data = need("vel.disc." + disc_.name(i)).data;
    iter_ = std::stol(a.meta.at("iteration"));
    teacher_active_ = a.meta.at("teacher_active") == "1";
    s_opt_.lr = std::stof(a.meta.at("lr"));
    d_opt_.lr = s_opt_.lr;
}

std::string iteration_log_header() {
    return "iter,phase,sup,unsup,adv_ins,adv_img,total,lr,num_pseudo,weights_degenerate";
}

std::string iteration_log_row(const IterationLog& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%s,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%d,%d", row.iter, row.phase,
                  static_cast<double>(row.losses.sup), static_cast<double>(row.losses.unsup),
                  static_cast<double>(row.losses.adv_ins), static_cast<double>(row.losses.adv_img),
                  static_cast<double>(row.losses.total), static_cast<double>(row.lr), row.num_pseudo,
                  row.weights_degenerate);
    return buf;
}

}  // namespace dadet
