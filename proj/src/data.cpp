#include "dadet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dadet/common.hpp"
#include "dadet/image_io.hpp"
#include "dadet/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace dadet {

void SceneSpec::validate() const {
    if (h < 64 || w < 64) throw ConfigError("SceneSpec: image size must be at least 64x64");
    if (num_classes < 2) throw ConfigError("SceneSpec: need at least 2 classes");
    if (num_classes > 3) throw ConfigError("SceneSpec: only circle/square/triangle are drawable");
    if (min_box_side < 8) throw ConfigError("SceneSpec: min_box_side must be at least 8");
    if (max_box_side < min_box_side) throw ConfigError("SceneSpec: max_box_side < min_box_side");
    if (max_box_side > std::min(h, w) - 4) throw ConfigError("SceneSpec: max_box_side too large for image");
    if (min_objects < 0 || max_objects < min_objects) throw ConfigError("SceneSpec: bad object count range");
    if (fogged) {
        if (fog.beta0 < 0.f) throw ConfigError("FogSpec: beta0 must be non-negative");
        if (fog.airlight < 0.f || fog.airlight > 1.f) throw ConfigError("FogSpec: airlight outside [0,1]");
        if (fog.noise_amp < 0.f) throw ConfigError("FogSpec: noise_amp must be non-negative");
    }
}

void AnnotatedImage::guard() const {
    if (eval_only)
        throw StructuralError("training path touched eval-only annotations of " + id);
}

void AnnotatedImage::set_annotations(std::vector<Box> boxes, std::vector<int> labels) {
    if (boxes.size() != labels.size())
        throw ArgumentError("set_annotations: box/label count mismatch");
    boxes_ = std::move(boxes);
    labels_ = std::move(labels);
}

namespace {

// Smooth low-frequency noise in [-1, 1]: a short sum of random sinusoid
// products. Cheap, differentiably smooth, and fully determined by the rng.
Tensor<float> smooth_noise(int h, int w, Rng& rng) {
    constexpr int waves = 3;
    float fx[waves], fy[waves], px[waves], py[waves];
    for (int k = 0; k < waves; ++k) {
        fx[k] = static_cast<float>(rng.uniform(0.5, 2.5));
        fy[k] = static_cast<float>(rng.uniform(0.5, 2.5));
        px[k] = static_cast<float>(rng.uniform(0.0, 6.2831853));
        py[k] = static_cast<float>(rng.uniform(0.0, 6.2831853));
    }
    Tensor<float> out({h, w});
    const float tau = 6.2831853f;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float v = 0.f;
            for (int k = 0; k < waves; ++k)
                v += std::sin(tau * fx[k] * (x + 0.5f) / w + px[k]) *
                     std::sin(tau * fy[k] * (y + 0.5f) / h + py[k]);
            out.at(y, x) = v / waves;
        }
    }
    return out;
}

struct ShapeColor {
    float r, g, b;
};

// Class-correlated base colors with jitter: fog pulls everything toward the
// airlight gray, which is exactly the cue degradation the target domain needs.
ShapeColor sample_color(int cls, Rng& rng) {
    static const ShapeColor base[3] = {{0.85f, 0.25f, 0.20f},   // circle
                                       {0.20f, 0.75f, 0.30f},   // square
                                       {0.25f, 0.35f, 0.90f}};  // triangle
    auto jitter = [&](float v) {
        float j = static_cast<float>(rng.uniform(-0.12, 0.12));
        return std::min(0.95f, std::max(0.05f, v + j));
    };
    return {jitter(base[cls].r), jitter(base[cls].g), jitter(base[cls].b)};
}

// Coverage of pixel (x, y) by the shape inscribed in box, 2x2 supersampled.
float shape_coverage(int cls, const Box& b, int x, int y) {
    int hits = 0;
    for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
            float px = x + 0.25f + 0.5f * sx;
            float py = y + 0.25f + 0.5f * sy;
            bool inside = false;
            switch (cls) {
                case 0: {  // circle inscribed in the box
                    float rx = (px - b.cx()) / (b.w() / 2.f);
                    float ry = (py - b.cy()) / (b.h() / 2.f);
                    inside = rx * rx + ry * ry <= 1.f;
                    break;
                }
                case 1:  // square: the box itself
                    inside = px >= b.x1 && px <= b.x2 && py >= b.y1 && py <= b.y2;
                    break;
                default: {  // isoceles triangle: apex top-center, base at the bottom
                    if (py >= b.y1 && py <= b.y2) {
                        float t = (py - b.y1) / b.h();  // 0 at apex row, 1 at base
                        float half = t * b.w() / 2.f;
                        inside = std::abs(px - b.cx()) <= half;
                    }
                    break;
                }
            }
            hits += inside ? 1 : 0;
        }
    }
    return hits / 4.f;
}

float quantize255(float v) {
    v = std::min(1.f, std::max(0.f, v));
    return std::round(v * 255.f) / 255.f;
}

}  // namespace

Tensor<float> apply_fog(const Tensor<float>& pixels, const Tensor<float>& beta, float airlight,
                        const Tensor<float>& depth) {
    if (pixels.shape.size() != 3 || beta.shape.size() != 2 || depth.shape.size() != 2 ||
        pixels.dim(1) != beta.dim(0) || pixels.dim(2) != beta.dim(1) ||
        beta.shape != depth.shape)
        throw ArgumentError("apply_fog: shape mismatch between pixels, beta and depth");
    const int h = pixels.dim(1), w = pixels.dim(2);
    Tensor<float> out(pixels.shape);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float t = std::exp(-beta.at(y, x) * depth.at(y, x));
            for (int c = 0; c < 3; ++c) {
                float v = pixels.at(c, y, x) * t + airlight * (1.f - t);
                out.at(c, y, x) = std::min(1.f, std::max(0.f, v));
            }
        }
    }
    return out;
}

Tensor<float> depth_field(int h, int w, std::uint64_t seed, long index) {
    Rng rng(seed, "depth", static_cast<std::uint64_t>(index));
    Tensor<float> noise = smooth_noise(h, w, rng);
    Tensor<float> out({h, w});
    for (int y = 0; y < h; ++y) {
        float ramp = 1.f - (y + 0.5f) / h;  // far at the top of the frame
        for (int x = 0; x < w; ++x)
            out.at(y, x) = std::min(1.f, std::max(0.05f, ramp + 0.25f * noise.at(y, x)));
    }
    return out;
}

Tensor<float> beta_field(int h, int w, const FogSpec& fog, std::uint64_t seed, long index) {
    Rng rng(seed, "beta", static_cast<std::uint64_t>(index));
    Tensor<float> noise = smooth_noise(h, w, rng);
    Tensor<float> out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(y, x) = fog.beta0 * std::max(0.f, 1.f + fog.noise_amp * noise.at(y, x));
    return out;
}

AnnotatedImage make_scene(const SceneSpec& spec, std::uint64_t seed, long index) {
    Rng rng(seed, "scene", static_cast<std::uint64_t>(index));
    const int h = spec.h, w = spec.w;

    // background: soft vertical gradient + mild texture
    Tensor<float> pixels({3, h, w});
    Rng noise_rng(seed, "bg", static_cast<std::uint64_t>(index));
    Tensor<float> bg_noise = smooth_noise(h, w, noise_rng);
    for (int y = 0; y < h; ++y) {
        float base = 0.55f - 0.20f * (y + 0.5f) / h;
        for (int x = 0; x < w; ++x) {
            float v = base + 0.05f * bg_noise.at(y, x);
            for (int c = 0; c < 3; ++c) pixels.at(c, y, x) = v;
        }
    }

    // objects: rejection-place boxes with low pairwise overlap
    int count = rng.uniform_int(spec.min_objects, spec.max_objects);
    std::vector<Box> boxes;
    std::vector<int> labels;
    for (int k = 0; k < count; ++k) {
        int side = rng.uniform_int(spec.min_box_side, spec.max_box_side);
        Box b{};
        bool placed = false;
        for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
            float x1 = static_cast<float>(rng.uniform(2.0, w - 2.0 - side));
            float y1 = static_cast<float>(rng.uniform(2.0, h - 2.0 - side));
            b = Box{x1, y1, x1 + side, y1 + side};
            placed = true;
            for (const Box& other : boxes)
                if (iou(b, other) > 0.25f) {
                    placed = false;
                    break;
                }
        }
        if (!placed) continue;  // crowded scene: drop the object rather than force overlap
        int cls = rng.uniform_int(0, spec.num_classes - 1);
        ShapeColor col = sample_color(cls, rng);
        int ix1 = static_cast<int>(std::floor(b.x1)), ix2 = static_cast<int>(std::ceil(b.x2));
        int iy1 = static_cast<int>(std::floor(b.y1)), iy2 = static_cast<int>(std::ceil(b.y2));
        for (int y = std::max(0, iy1); y < std::min(h, iy2 + 1); ++y) {
            for (int x = std::max(0, ix1); x < std::min(w, ix2 + 1); ++x) {
                float a = shape_coverage(cls, b, x, y);
                if (a <= 0.f) continue;
                pixels.at(0, y, x) = pixels.at(0, y, x) * (1.f - a) + col.r * a;
                pixels.at(1, y, x) = pixels.at(1, y, x) * (1.f - a) + col.g * a;
                pixels.at(2, y, x) = pixels.at(2, y, x) * (1.f - a) + col.b * a;
            }
        }
        boxes.push_back(b);
        labels.push_back(cls);
    }

    AnnotatedImage img(std::move(boxes), std::move(labels));
    img.domain = spec.fogged ? Domain::target : Domain::source;
    img.eval_only = spec.fogged;

    if (spec.fogged) {
        Tensor<float> depth = depth_field(h, w, seed, index);
        Tensor<float> beta = beta_field(h, w, spec.fog, seed, index);
        pixels = apply_fog(pixels, beta, spec.fog.airlight, depth);
        img.fog_density = Tensor<float>({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.fog_density.at(y, x) = beta.at(y, x) * depth.at(y, x);
    }

    for (auto& v : pixels.data) v = quantize255(v);
    img.pixels = std::move(pixels);

    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%06ld", spec.fogged ? "tgt" : "src", index);
    img.id = buf;
    return img;
}

std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec, int count, std::uint64_t seed) {
    spec.validate();
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
    std::vector<AnnotatedImage> out;
    out.reserve(static_cast<size_t>(count));
    for (long i = 0; i < count; ++i) out.push_back(make_scene(spec, seed, i));
    return out;
}

std::string save_dataset(const std::vector<AnnotatedImage>& images, const std::string& dir_path) {
    fs::path dir(dir_path);
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    if (ec) throw IoError("save_dataset: cannot create " + (dir / "images").string());
    bool any_fog = false;
    for (const auto& im : images) any_fog = any_fog || !im.fog_density.empty();
    if (any_fog) {
        fs::create_directories(dir / "fog", ec);
        if (ec) throw IoError("save_dataset: cannot create " + (dir / "fog").string());
    }

    fs::path manifest = dir / "manifest.jsonl";
    std::ofstream out(manifest);
    if (!out) throw IoError("save_dataset: cannot open " + manifest.string());
    for (const auto& im : images) {
        std::string rel = "images/" + im.id + ".ppm";
        write_ppm((dir / rel).string(), im.pixels);
        json rec;
        rec["id"] = im.id;
        rec["file"] = rel;
        rec["width"] = im.width();
        rec["height"] = im.height();
        rec["domain"] = domain_name(im.domain);
        json jb = json::array();
        for (const Box& b : im.boxes_eval())
            jb.push_back({static_cast<double>(b.x1), static_cast<double>(b.y1),
                          static_cast<double>(b.x2), static_cast<double>(b.y2)});
        rec["boxes"] = jb;
        rec["labels"] = im.labels_eval();
        rec["eval_only"] = im.eval_only;
        if (!im.fog_density.empty()) {
            std::string fog_rel = "fog/" + im.id + ".pfm";
            write_pfm((dir / fog_rel).string(), im.fog_density);
            rec["fog_file"] = fog_rel;
        }
        out << rec.dump() << "\n";
    }
    if (!out) throw IoError("save_dataset: short write to " + manifest.string());
    return manifest.string();
}

std::vector<AnnotatedImage> load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("load_dataset: cannot open " + manifest_path);
    fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<AnnotatedImage> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("load_dataset: malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
        }
        std::string id;
        try {
            id = rec.at("id").get<std::string>();
            std::vector<Box> boxes;
            for (const auto& jb : rec.at("boxes"))
                boxes.push_back(Box{jb.at(0).get<float>(), jb.at(1).get<float>(), jb.at(2).get<float>(),
                                    jb.at(3).get<float>()});
            std::vector<int> labels = rec.at("labels").get<std::vector<int>>();
            AnnotatedImage im(std::move(boxes), std::move(labels));
            im.id = id;
            im.domain = rec.at("domain").get<std::string>() == "target" ? Domain::target : Domain::source;
            im.eval_only = rec.at("eval_only").get<bool>();
            fs::path img_path = dir / rec.at("file").get<std::string>();
            if (!fs::exists(img_path))
                throw IoError("load_dataset: missing raster for id " + id + ": " + img_path.string());
            im.pixels = read_ppm(img_path.string());
            if (im.width() != rec.at("width").get<int>() || im.height() != rec.at("height").get<int>())
                throw IoError("load_dataset: size mismatch for id " + id);
            if (rec.contains("fog_file")) {
                fs::path fog_path = dir / rec.at("fog_file").get<std::string>();
                if (!fs::exists(fog_path))
                    throw IoError("load_dataset: missing fog field for id " + id);
                im.fog_density = read_pfm(fog_path.string());
            }
            out.push_back(std::move(im));
        } catch (const json::exception& e) {
            throw IoError("load_dataset: bad record at line " + std::to_string(line_no) +
                          (id.empty() ? "" : " (id " + id + ")") + ": " + e.what());
        }
    }
    return out;
}

}  // namespace dadet
