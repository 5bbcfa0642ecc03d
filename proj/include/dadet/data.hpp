#pragma once

// Synthetic two-domain shape scenes: a clean source domain and a fog-shifted
// target domain produced by atmospheric scattering over a procedural depth
// field. Target ground truth is stored but locked behind an eval-only guard.

#include <string>
#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

enum class Domain { source, target };

inline const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

struct FogSpec {
    float beta0 = 1.6f;      // base attenuation
    float noise_amp = 0.5f;  // relative amplitude of the smooth noise on the beta field
    float airlight = 0.85f;  // grayscale airlight A
};

struct SceneSpec {
    int h = 128, w = 128;
    int min_objects = 1, max_objects = 5;
    int num_classes = 3;  // circle, square, triangle
    int min_box_side = 12;
    int max_box_side = 48;
    bool fogged = false;  // fogged scenes are the target domain
    FogSpec fog;

    void validate() const;  // throws ConfigError
};

class AnnotatedImage {
public:
    std::string id;
    Tensor<float> pixels;  // {3, H, W} in [0,1], values on the 1/255 grid
    Domain domain = Domain::source;
    bool eval_only = false;            // target images: annotations are for evaluation only
    Tensor<float> fog_density;         // {H, W} beta*depth, empty for clean images

    AnnotatedImage() = default;
    AnnotatedImage(std::vector<Box> boxes, std::vector<int> labels)
        : boxes_(std::move(boxes)), labels_(std::move(labels)) {}

    int width() const { return pixels.dim(2); }
    int height() const { return pixels.dim(1); }
    size_t num_boxes() const { return boxes_.size(); }

    // Training-path accessors: refuse eval-only annotations so no code path
    // can silently train on target ground truth.
    const std::vector<Box>& boxes() const {
        guard();
        return boxes_;
    }
    const std::vector<int>& labels() const {
        guard();
        return labels_;
    }

    // Evaluation-path accessors, always allowed.
    const std::vector<Box>& boxes_eval() const { return boxes_; }
    const std::vector<int>& labels_eval() const { return labels_; }

    void set_annotations(std::vector<Box> boxes, std::vector<int> labels);

private:
    void guard() const;
    std::vector<Box> boxes_;
    std::vector<int> labels_;
};

// I' = I*t + A*(1-t), t = exp(-beta*depth), elementwise over channels.
Tensor<float> apply_fog(const Tensor<float>& pixels, const Tensor<float>& beta_field, float airlight,
                        const Tensor<float>& depth);

// Procedural fields for one scene: depth ramps from far (top) to near
// (bottom) with smooth noise; the beta field is beta0 modulated by noise.
Tensor<float> depth_field(int h, int w, std::uint64_t seed, long index);
Tensor<float> beta_field(int h, int w, const FogSpec& fog, std::uint64_t seed, long index);

// Deterministic in (spec, seed, index); fogged specs produce target-domain,
// eval-only images carrying their fog-density field.
AnnotatedImage make_scene(const SceneSpec& spec, std::uint64_t seed, long index);
std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec, int count, std::uint64_t seed);

// JSON-lines manifest + one PPM (and PFM for fog) per image. Returns the
// manifest path. load_dataset round-trips annotations exactly and pixels
// losslessly.
std::string save_dataset(const std::vector<AnnotatedImage>& images, const std::string& dir_path);
std::vector<AnnotatedImage> load_dataset(const std::string& manifest_path);

}  // namespace dadet
