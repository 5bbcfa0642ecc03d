#pragma once

// Run artifacts: CSV tables, self-contained SVG charts, small file helpers
// and the detection-overlay renderer used by the viz command.

#include <string>
#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/evalmetrics.hpp"
#include "dadet/tensor.hpp"
#include "dadet/trainer.hpp"

namespace dadet {

// ---- tables ----

struct AblationRow {
    std::string label;
    bool strong = false, pdfa = false, ufoa = false;
    std::vector<std::uint64_t> seeds;
    std::vector<double> map50;  // one entry per seed
    double mean() const;
};

struct GammaRow {
    float gamma = 0.f;
    std::vector<std::uint64_t> seeds;
    std::vector<double> map50;
    double mean() const;
};

std::string csv_ablation(const std::vector<AblationRow>& rows);
std::string csv_gamma(const std::vector<GammaRow>& rows);
std::string csv_eval(const EvalReport& report, const std::vector<std::string>& class_names);
std::string csv_train_log(const std::vector<IterationLog>& log);

// ---- SVG charts (fixed 720x480 canvas, no external assets) ----

struct ScatterPoint {
    double x = 0, y = 0;
    int group = 0;
};

struct Series {
    std::string name;
    std::vector<double> xs, ys;
};

struct BarEntry {
    std::string label;
    double value = 0, err = 0;  // err: symmetric whisker, 0 hides it
};

std::string svg_scatter(const std::vector<ScatterPoint>& pts,
                        const std::vector<std::string>& group_names, const std::string& title);
std::string svg_lines(const std::vector<Series>& series, const std::string& title,
                      const std::string& ylabel);
std::string svg_bars(const std::vector<BarEntry>& bars, const std::string& title,
                     const std::string& ylabel);

// ---- files and rendering ----

void ensure_dir(const std::string& path);                              // mkdir -p
void write_text_file(const std::string& path, const std::string& s);   // IoError on failure

// Paints a 1px box outline (clipped) into a {3,H,W} image in place.
void draw_box_outline(Tensor<float>& pixels, const Box& b, float r, float g, float bl);

}  // namespace dadet
