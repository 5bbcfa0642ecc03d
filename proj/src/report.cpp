#include "dadet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dadet/common.hpp"

namespace dadet {

namespace {

double vec_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

std::string joined(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ';';
        s += fmt(v[i]);
    }
    return s;
}

// palette shared by all charts; group/series i wraps around
const char* kColors[] = {"#3366cc", "#dc3912", "#109618", "#ff9900", "#990099", "#0099c6"};
constexpr int kNumColors = 6;

constexpr int kW = 720, kH = 480;
constexpr int kMl = 64, kMr = 20, kMt = 40, kMb = 44;  // margins

struct AxisRange {
    double lo = 0, hi = 1;
    double px(double v, int p0, int p1) const {
        double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        return p0 + t * (p1 - p0);
    }
};

AxisRange fit_range(double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

void svg_open(std::ostringstream& s, const std::string& title) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    s << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"16\">" << title << "</text>\n";
}

void svg_axes(std::ostringstream& s, const AxisRange& xr, const AxisRange& yr,
              const std::string& xlabel, const std::string& ylabel) {
    int x0 = kMl, x1 = kW - kMr, y0 = kH - kMb, y1 = kMt;
    s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double tx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        double ty = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        double px = xr.px(tx, x0, x1), py = yr.px(ty, y0, y1);
        s << "<line x1=\"" << px << "\" y1=\"" << y0 << "\" x2=\"" << px << "\" y2=\"" << y0 + 4
          << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << px << "\" y=\"" << y0 + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(tx)
          << "</text>\n";
        s << "<line x1=\"" << x0 - 4 << "\" y1=\"" << py << "\" x2=\"" << x0 << "\" y2=\"" << py
          << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << x0 - 8 << "\" y=\"" << py + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(ty)
          << "</text>\n";
    }
    s << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kH - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel
      << "</text>\n";
    s << "<text x=\"14\" y=\"" << (y0 + y1) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 "
      << "14 " << (y0 + y1) / 2 << ")\">" << ylabel << "</text>\n";
}

}  // namespace

double AblationRow::mean() const { return vec_mean(map50); }
double GammaRow::mean() const { return vec_mean(map50); }

std::string csv_ablation(const std::vector<AblationRow>& rows) {
    std::string s = "row,strong_aug,pdfa,ufoa,num_seeds,map50_mean,map50_per_seed\n";
    for (const auto& r : rows) {
        s += r.label;
        s += ',';
        s += r.strong ? '1' : '0';
        s += ',';
        s += r.pdfa ? '1' : '0';
        s += ',';
        s += r.ufoa ? '1' : '0';
        s += ',';
        s += std::to_string(r.seeds.size());
        s += ',';
        s += fmt(r.mean());
        s += ',';
        s += joined(r.map50);
        s += '\n';
    }
    return s;
}

std::string csv_gamma(const std::vector<GammaRow>& rows) {
    std::string s = "gamma,num_seeds,map50_mean,map50_per_seed\n";
    for (const auto& r : rows) {
        s += fmt(r.gamma);
        s += ',';
        s += std::to_string(r.seeds.size());
        s += ',';
        s += fmt(r.mean());
        s += ',';
        s += joined(r.map50);
        s += '\n';
    }
    return s;
}

std::string csv_eval(const EvalReport& report, const std::vector<std::string>& class_names) {
    std::string s = "class,ap50,num_gt\n";
    for (size_t c = 0; c < report.per_class_ap.size(); ++c) {
        s += c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
        s += ',';
        s += fmt(report.per_class_ap[c]);
        s += ',';
        s += std::to_string(report.per_class_gt[c]);
        s += '\n';
    }
    s += "map50," + fmt(report.map50) + "," + std::to_string(report.total_gt) + "\n";
    return s;
}

std::string csv_train_log(const std::vector<IterationLog>& log) {
    std::string s = iteration_log_header() + "\n";
    for (const auto& row : log) s += iteration_log_row(row) + "\n";
    return s;
}

std::string svg_scatter(const std::vector<ScatterPoint>& pts,
                        const std::vector<std::string>& group_names, const std::string& title) {
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    if (!pts.empty()) {
        xlo = xhi = pts[0].x;
        ylo = yhi = pts[0].y;
        for (const auto& p : pts) {
            xlo = std::min(xlo, p.x);
            xhi = std::max(xhi, p.x);
            ylo = std::min(ylo, p.y);
            yhi = std::max(yhi, p.y);
        }
    }
    AxisRange xr = fit_range(xlo, xhi), yr = fit_range(ylo, yhi);
    std::ostringstream s;
    svg_open(s, title);
    svg_axes(s, xr, yr, "component 1", "component 2");
    for (const auto& p : pts) {
        double px = xr.px(p.x, kMl, kW - kMr), py = yr.px(p.y, kH - kMb, kMt);
        s << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\""
          << kColors[p.group % kNumColors] << "\" fill-opacity=\"0.7\"/>\n";
    }
    for (size_t g = 0; g < group_names.size(); ++g) {
        int lx = kW - kMr - 140, ly = kMt + 16 + 18 * static_cast<int>(g);
        s << "<circle cx=\"" << lx << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\""
          << kColors[g % kNumColors] << "\"/>\n";
        s << "<text x=\"" << lx + 10 << "\" y=\"" << ly
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << group_names[g] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string svg_lines(const std::vector<Series>& series, const std::string& title,
                      const std::string& ylabel) {
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    bool first = true;
    for (const auto& sr : series)
        for (size_t i = 0; i < sr.xs.size(); ++i) {
            if (first) {
                xlo = xhi = sr.xs[i];
                ylo = yhi = sr.ys[i];
                first = false;
            }
            xlo = std::min(xlo, sr.xs[i]);
            xhi = std::max(xhi, sr.xs[i]);
            ylo = std::min(ylo, sr.ys[i]);
            yhi = std::max(yhi, sr.ys[i]);
        }
    AxisRange xr = fit_range(xlo, xhi), yr = fit_range(ylo, yhi);
    std::ostringstream s;
    svg_open(s, title);
    svg_axes(s, xr, yr, "iteration", ylabel);
    for (size_t g = 0; g < series.size(); ++g) {
        const auto& sr = series[g];
        if (sr.xs.empty()) continue;
        s << "<polyline fill=\"none\" stroke=\"" << kColors[g % kNumColors]
          << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < sr.xs.size(); ++i) {
            s << xr.px(sr.xs[i], kMl, kW - kMr) << "," << yr.px(sr.ys[i], kH - kMb, kMt) << " ";
        }
        s << "\"/>\n";
        int lx = kW - kMr - 140, ly = kMt + 16 + 18 * static_cast<int>(g);
        s << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 16 << "\" y2=\""
          << ly - 4 << "\" stroke=\"" << kColors[g % kNumColors] << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << lx + 22 << "\" y=\"" << ly
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << sr.name << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string svg_bars(const std::vector<BarEntry>& bars, const std::string& title,
                     const std::string& ylabel) {
    double ylo = 0, yhi = 1;
    if (!bars.empty()) {
        ylo = yhi = 0;
        for (const auto& b : bars) {
            ylo = std::min(ylo, b.value - b.err);
            yhi = std::max(yhi, b.value + b.err);
        }
    }
    AxisRange yr = fit_range(ylo, yhi);
    std::ostringstream s;
    svg_open(s, title);
    svg_axes(s, AxisRange{0, 1}, yr, "", ylabel);
    int x0 = kMl, x1 = kW - kMr, y0 = kH - kMb;
    int n = static_cast<int>(bars.size());
    double slot = n > 0 ? static_cast<double>(x1 - x0) / n : 1.0;
    for (int i = 0; i < n; ++i) {
        const auto& b = bars[static_cast<size_t>(i)];
        double cx = x0 + slot * (i + 0.5);
        double bw = slot * 0.55;
        double ty = yr.px(b.value, y0, kMt);
        double by = yr.px(std::max(yr.lo, 0.0), y0, kMt);
        s << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << std::min(ty, by) << "\" width=\"" << bw
          << "\" height=\"" << std::fabs(by - ty) << "\" fill=\"" << kColors[i % kNumColors]
          << "\" fill-opacity=\"0.8\"/>\n";
        if (b.err > 0) {
            double ey0 = yr.px(b.value - b.err, y0, kMt), ey1 = yr.px(b.value + b.err, y0, kMt);
            s << "<line x1=\"" << cx << "\" y1=\"" << ey0 << "\" x2=\"" << cx << "\" y2=\"" << ey1
              << "\" stroke=\"black\"/>\n";
        }
        s << "<text x=\"" << cx << "\" y=\"" << y0 + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << b.label
          << "</text>\n";
        s << "<text x=\"" << cx << "\" y=\"" << std::min(ty, by) - 4
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(b.value)
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << s;
    if (!out) throw IoError("write failed: " + path);
}

void draw_box_outline(Tensor<float>& pixels, const Box& b, float r, float g, float bl) {
    const int h = pixels.dim(1), w = pixels.dim(2);
    int x1 = std::max(0, static_cast<int>(std::lround(b.x1)));
    int y1 = std::max(0, static_cast<int>(std::lround(b.y1)));
    int x2 = std::min(w - 1, static_cast<int>(std::lround(b.x2)));
    int y2 = std::min(h - 1, static_cast<int>(std::lround(b.y2)));
    if (x1 > x2 || y1 > y2) return;
    auto put = [&](int y, int x) {
        pixels.at(0, y, x) = r;
        pixels.at(1, y, x) = g;
        pixels.at(2, y, x) = bl;
    };
    for (int x = x1; x <= x2; ++x) {
        put(y1, x);
        put(y2, x);
    }
    for (int y = y1; y <= y2; ++y) {
        put(y, x1);
        put(y, x2);
    }
}

}  // namespace dadet
