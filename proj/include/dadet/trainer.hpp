#pragma once

// The training loop: burn-in then mutual teacher-student learning (full mode)
// or the no-phase alignment protocol (baseline mode used by the ablation
// grid). Owns both parameter sets, the discriminators, the optimizer and the
// per-iteration log.

#include <functional>
#include <string>
#include <vector>

#include "dadet/augment.hpp"
#include "dadet/data.hpp"
#include "dadet/discriminators.hpp"
#include "dadet/evalmetrics.hpp"
#include "dadet/model.hpp"
#include "dadet/objective.hpp"
#include "dadet/params.hpp"

namespace dadet {

enum class RunMode { baseline, full };

struct TrainConfig {
    DetectorCfg det;
    float alpha = 0.9996f;  // EMA factor (full-scale default; desk runs override)
    float lambda = 0.01f;   // adversarial weight
    float gamma = 0.8f;     // uncertainty factor
    float tau = 0.8f;       // pseudo-label score threshold
    long burn_in_iters = 500;
    long total_iters = 2000;
    float lr = 0.01f;
    float momentum = 0.9f;
    long lr_decay_iter = 1600;  // single x0.1 step; <0 disables
    float lr_decay_factor = 0.1f;
    int batch_source = 8;
    int batch_target = 8;
    bool pdfa_on = true;
    bool ufoa_on = true;
    bool strong_aug_on = true;
    RunMode mode = RunMode::full;
    std::uint64_t seed = 1;
    int rois_per_image = 64;
    float rpn_nms_thresh = 0.7f;
    float eval_score_thresh = 0.05f;
    float eval_nms_thresh = 0.5f;
    int eval_k_max = 100;
    long checkpoint_every = 0;  // 0: only at phase transition and end
    long nan_inject_iter = -1;  // test hook: poison the loss at this iteration
    AugmentParams aug;

    void validate() const;  // throws ConfigError
};

struct IterationLog {
    long iter = 0;
    const char* phase = "";
    LossBundle<float> losses;
    float lr = 0.f;
    int num_pseudo = 0;       // pseudo boxes across the target batch
    int weights_degenerate = 0;  // min-max fallback engaged this iteration
};

struct PdfaSemanticResult {
    double mean_top = 0.0;     // mean w-tilde of proposals in top-quartile fog cells
    double mean_bottom = 0.0;  // ... bottom quartile
    long n_top = 0, n_bottom = 0;
};

class Trainer {
public:
    Trainer(TrainConfig cfg, std::vector<AnnotatedImage> source_train,
            std::vector<AnnotatedImage> target_train);

    // One optimization step; appends to log(). Throws NanAbort with
    // diagnostics on a non-finite loss.
    void step();

    // Runs from the current iteration to total_iters. on_iter (optional) is
    // called after every step with the fresh log row.
    void run(const std::function<void(const IterationLog&)>& on_iter = nullptr);

    long iteration() const { return iter_; }
    const char* phase_name() const;
    const std::vector<IterationLog>& log() const { return log_; }
    const TrainConfig& config() const { return cfg_; }

    const ParamStore<float>& student() const { return student_; }
    const ParamStore<float>& teacher() const { return teacher_; }
    const ParamStore<float>& discriminators() const { return disc_; }
    bool teacher_active() const { return teacher_active_; }

    Detections detect_with(const ParamStore<float>& params, const Tensor<float>& pixels) const;
    EvalReport evaluate(const ParamStore<float>& params,
                        const std::vector<AnnotatedImage>& dataset) const;

    // Globally average-pooled P2 features per image (PCA input).
    Tensor<double> pooled_features(const ParamStore<float>& params,
                                   const std::vector<AnnotatedImage>& dataset) const;

    // Fog-density correlation of the instance weights on a target batch:
    // training-style views and proposal machinery, per-image fog quartiles.
    PdfaSemanticResult pdfa_fog_correlation(const std::vector<AnnotatedImage>& target_images,
                                            int max_images, std::uint64_t seed) const;

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

private:
    struct StudentPass;  // per-image forward record (defined in the .cpp)

    const char* phase_at(long iter) const;
    Tensor<float> augmented_view(const AnnotatedImage& img, bool strong, const char* tag,
                                 long ordinal) const;
    std::vector<int> sample_batch(const std::vector<AnnotatedImage>& set, int count,
                                  const char* tag) const;
    void maybe_decay_lr();

    TrainConfig cfg_;
    std::vector<AnnotatedImage> source_;
    std::vector<AnnotatedImage> target_;

    Detector<float> det_;
    Discriminators<float> discnet_;
    ParamStore<float> student_, teacher_, disc_;
    GradStore<float> s_grads_, d_grads_;
    SgdOptimizer<float> s_opt_, d_opt_;

    long iter_ = 0;
    bool teacher_active_ = false;
    std::vector<IterationLog> log_;
};

// Formats one CSV row / the header for the training log.
std::string iteration_log_header();
std::string iteration_log_row(const IterationLog& row);

}  // namespace dadet
