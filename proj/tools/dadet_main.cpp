// dadet: synthetic two-domain detection with differential feature alignment.
// Subcommands: gen-data, train, eval, ablate, viz.
// Exit codes: 0 ok, 2 config/usage error, 3 runtime abort (non-finite loss),
// 4 I/O error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dadet/checkpoint.hpp"
#include "dadet/common.hpp"
#include "dadet/config.hpp"
#include "dadet/data.hpp"
#include "dadet/image_io.hpp"
#include "dadet/report.hpp"
#include "dadet/trainer.hpp"
#include "dadet/ufoa.hpp"

namespace {

using namespace dadet;
using json = nlohmann::json;

std::vector<std::string> class_names_for(int c) {
    static const char* base[] = {"circle", "square", "triangle"};
    std::vector<std::string> names;
    for (int i = 0; i < c; ++i) names.push_back(i < 3 ? base[i] : "class" + std::to_string(i));
    return names;
}

// Env overrides sit between the config file and explicit --set flags:
// DADET_OUT_ROOT reroots relative out dirs, DADET_SEED replaces the seed.
void apply_env(RunConfig& rc) {
    if (const char* root = std::getenv("DADET_OUT_ROOT")) {
        if (root[0] != '\0' && !rc.out_dir.empty() && rc.out_dir[0] != '/')
            rc.out_dir = std::string(root) + "/" + rc.out_dir;
    }
    if (const char* seed = std::getenv("DADET_SEED")) {
        if (seed[0] != '\0') rc.apply("seed", seed);
    }
}

RunConfig build_run_config(const std::string& config_path, const std::vector<std::string>& sets) {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    apply_env(rc);
    apply_overrides(rc, sets);
    return rc;
}

ParamStore<float> detector_params_from_archive(const std::string& path, const DetectorCfg& cfg,
                                               const std::string& prefix, std::uint64_t seed) {
    Archive a = read_archive(path);
    ParamStore<float> ps;
    Rng rng(seed, "init_student");
    Detector<float>(cfg).build_params(ps, rng);
    for (int i = 0; i < ps.count(); ++i) {
        auto it = a.arrays.find(prefix + ps.name(i));
        if (it == a.arrays.end())
            throw IoError("checkpoint " + path + " lacks array " + prefix + ps.name(i));
        auto& dst = ps.mutable_tensor(i, Writer::Load);
        if (it->second.shape != dst.shape)
            throw StructuralError("checkpoint shape mismatch for " + prefix + ps.name(i) +
                                  " (wrong num_classes?)");
        dst.data = it->second.data;
    }
    return ps;
}

// ---- gen-data ----

int cmd_gen_data(const std::string& out, int n_source, int n_target, int n_val, int h, int w,
                 int classes, std::uint64_t seed, float beta0, float fog_noise, float airlight) {
    SceneSpec clean;
    clean.h = h;
    clean.w = w;
    clean.num_classes = classes;
    clean.fogged = false;
    clean.validate();
    SceneSpec foggy = clean;
    foggy.fogged = true;
    foggy.fog.beta0 = beta0;
    foggy.fog.noise_amp = fog_noise;
    foggy.fog.airlight = airlight;
    foggy.validate();

    ensure_dir(out);
    std::string m1 = save_dataset(generate_dataset(clean, n_source, seed), out + "/source_train");
    std::string m2 = save_dataset(generate_dataset(foggy, n_target, seed + 1), out + "/target_train");
    std::string m3 = save_dataset(generate_dataset(foggy, n_val, seed + 2), out + "/target_val");
    std::printf("source_train: %d images -> %s\n", n_source, m1.c_str());
    std::printf("target_train: %d images -> %s\n", n_target, m2.c_str());
    std::printf("target_val:   %d images -> %s\n", n_val, m3.c_str());
    return 0;
}

// ---- train ----

void write_loss_curves(const std::string& path, const std::vector<IterationLog>& log) {
    Series sup{"sup", {}, {}}, unsup{"unsup", {}, {}}, ins{"adv_ins", {}, {}}, img{"adv_img", {}, {}};
    for (const auto& r : log) {
        double x = static_cast<double>(r.iter);
        sup.xs.push_back(x);
        sup.ys.push_back(r.losses.sup);
        unsup.xs.push_back(x);
        unsup.ys.push_back(r.losses.unsup);
        ins.xs.push_back(x);
        ins.ys.push_back(r.losses.adv_ins);
        img.xs.push_back(x);
        img.ys.push_back(r.losses.adv_img);
    }
    write_text_file(path, svg_lines({sup, unsup, ins, img}, "training losses", "loss"));
}

int cmd_train(RunConfig rc, const std::string& resume) {
    rc.train.validate();
    const std::string dir = rc.out_dir;
    ensure_dir(dir);
    write_text_file(dir + "/config.txt", echo_config(rc));
    write_text_file(dir + "/run_id.txt", run_id(rc) + "\n");

    auto src = load_dataset(rc.source_manifest);
    auto tgt = load_dataset(rc.target_manifest);
    std::vector<AnnotatedImage> val;
    if (!rc.val_manifest.empty()) val = load_dataset(rc.val_manifest);

    Trainer tr(rc.train, std::move(src), std::move(tgt));
    if (!resume.empty()) {
        tr.load_checkpoint(resume);
        std::printf("resumed from %s at iteration %ld\n", resume.c_str(), tr.iteration());
    }

    EvalReport burnin_report;
    bool have_burnin = false;
    tr.run([&](const IterationLog& row) {
        if (row.iter % 50 == 0 || row.iter + 1 == rc.train.total_iters)
            std::printf("%s\n", iteration_log_row(row).c_str());
        if (rc.train.mode == RunMode::full && tr.iteration() == rc.train.burn_in_iters) {
            tr.save_checkpoint(dir + "/ckpt_burnin.bin");
            if (!val.empty()) {
                burnin_report = tr.evaluate(tr.student(), val);
                have_burnin = true;
                std::printf("burn-in model target-val map50: %.4f\n", burnin_report.map50);
            }
        }
        if (rc.train.checkpoint_every > 0 && tr.iteration() % rc.train.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "/ckpt_iter%06ld.bin", tr.iteration());
            tr.save_checkpoint(dir + name);
        }
    });
    tr.save_checkpoint(dir + "/ckpt_final.bin");
    write_text_file(dir + "/train_log.csv", csv_train_log(tr.log()));
    write_loss_curves(dir + "/loss_curves.svg", tr.log());

    json summary;
    summary["run_id"] = run_id(rc);
    summary["config"] = echo_config(rc);
    summary["iterations"] = tr.iteration();
    auto names = class_names_for(rc.train.det.num_classes);
    if (!val.empty()) {
        EvalReport student_rep = tr.evaluate(tr.student(), val);
        write_text_file(dir + "/eval_student.csv", csv_eval(student_rep, names));
        summary["map50_student"] = student_rep.map50;
        std::printf("final student target-val map50: %.4f\n", student_rep.map50);
        if (tr.teacher_active()) {
            EvalReport teacher_rep = tr.evaluate(tr.teacher(), val);
            write_text_file(dir + "/eval_teacher.csv", csv_eval(teacher_rep, names));
            summary["map50_teacher"] = teacher_rep.map50;
            std::printf("final teacher target-val map50: %.4f\n", teacher_rep.map50);
        }
        if (have_burnin) {
            write_text_file(dir + "/eval_burnin.csv", csv_eval(burnin_report, names));
            summary["map50_burnin"] = burnin_report.map50;
        }
    }
    write_text_file(dir + "/summary.json", summary.dump(2) + "\n");
    std::printf("run %s complete -> %s\n", run_id(rc).c_str(), dir.c_str());
    return 0;
}

// ---- eval ----

int cmd_eval(const RunConfig& rc, const std::string& ckpt, const std::string& manifest,
             bool use_teacher, const std::string& out_csv) {
    auto params = detector_params_from_archive(ckpt, rc.train.det,
                                               use_teacher ? "teacher." : "student.", rc.train.seed);
    auto images = load_dataset(manifest);
    Detector<float> det(rc.train.det);
    std::vector<EvalImage> evals;
    evals.reserve(images.size());
    for (const auto& img : images) {
        EvalImage e;
        e.dets = det.detect(params, img.pixels, rc.train.eval_score_thresh, rc.train.eval_nms_thresh,
                            rc.train.eval_k_max);
        e.gt_boxes = img.boxes_eval();
        e.gt_labels = img.labels_eval();
        evals.push_back(std::move(e));
    }
    EvalReport rep = ap50(evals, rc.train.det.num_classes);
    auto names = class_names_for(rc.train.det.num_classes);
    std::string csv = csv_eval(rep, names);
    std::printf("%s", csv.c_str());
    if (!out_csv.empty()) write_text_file(out_csv, csv);
    return 0;
}

// ---- ablate ----

// Reduced protocol shared by both axes: no burn-in/mutual split, the teacher
// tracks the student by EMA from iteration 0, toggles pick the alignment
// flavor. The student is evaluated.
double ablate_one(const RunConfig& base, const std::vector<AnnotatedImage>& src,
                  const std::vector<AnnotatedImage>& tgt, const std::vector<AnnotatedImage>& val,
                  bool strong, bool pdfa, bool ufoa, float gamma, std::uint64_t seed,
                  const std::string& run_dir) {
    RunConfig rc = base;
    rc.train.mode = RunMode::baseline;
    rc.train.strong_aug_on = strong;
    rc.train.pdfa_on = pdfa;
    rc.train.ufoa_on = ufoa;
    rc.train.gamma = gamma;
    rc.train.seed = seed;
    rc.train.burn_in_iters = 0;
    rc.out_dir = run_dir;
    rc.train.validate();
    ensure_dir(run_dir);
    write_text_file(run_dir + "/config.txt", echo_config(rc));
    write_text_file(run_dir + "/run_id.txt", run_id(rc) + "\n");
    Trainer tr(rc.train, src, tgt);
    tr.run();
    write_text_file(run_dir + "/train_log.csv", csv_train_log(tr.log()));
    EvalReport rep = tr.evaluate(tr.student(), val);
    write_text_file(run_dir + "/eval_student.csv",
                    csv_eval(rep, class_names_for(rc.train.det.num_classes)));
    std::printf("  seed %llu: map50 %.4f\n", static_cast<unsigned long long>(seed), rep.map50);
    return rep.map50;
}

double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int cmd_ablate(const RunConfig& base, const std::string& axis, int num_seeds) {
    if (axis != "modules" && axis != "gamma")
        throw ConfigError("unknown ablation axis: " + axis + " (modules|gamma)");
    auto src = load_dataset(base.source_manifest);
    auto tgt = load_dataset(base.target_manifest);
    auto val = load_dataset(base.val_manifest);
    const std::string dir = base.out_dir;
    ensure_dir(dir);

    if (axis == "modules") {
        struct RowSpec {
            const char* label;
            bool strong, pdfa, ufoa;
        };
        const RowSpec grid[] = {
            {"baseline", false, false, false}, {"strong", true, false, false},
            {"strong_pdfa", true, true, false}, {"strong_ufoa", true, false, true},
            {"full", true, true, true},
        };
        std::vector<AblationRow> rows;
        for (const auto& g : grid) {
            std::printf("row %s\n", g.label);
            AblationRow row;
            row.label = g.label;
            row.strong = g.strong;
            row.pdfa = g.pdfa;
            row.ufoa = g.ufoa;
            for (int s = 0; s < num_seeds; ++s) {
                std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
                std::string sub = dir + "/" + g.label + "_s" + std::to_string(seed);
                row.seeds.push_back(seed);
                row.map50.push_back(ablate_one(base, src, tgt, val, g.strong, g.pdfa, g.ufoa,
                                               base.train.gamma, seed, sub));
            }
            rows.push_back(std::move(row));
        }
        write_text_file(dir + "/ablation_modules.csv", csv_ablation(rows));
        std::vector<BarEntry> bars;
        for (const auto& r : rows) bars.push_back({r.label, r.mean(), stddev(r.map50)});
        write_text_file(dir + "/ablation_modules.svg",
                        svg_bars(bars, "module ablation (target-val map50)", "map50"));
        std::printf("%s", csv_ablation(rows).c_str());
    } else {
        const float gammas[] = {0.0f, 0.5f, 0.8f, 1.0f};
        std::vector<GammaRow> rows;
        for (float g : gammas) {
            std::printf("gamma %.2f\n", static_cast<double>(g));
            GammaRow row;
            row.gamma = g;
            for (int s = 0; s < num_seeds; ++s) {
                std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
                char label[48];
                std::snprintf(label, sizeof(label), "/gamma%03d_s%llu", static_cast<int>(g * 100),
                              static_cast<unsigned long long>(seed));
                row.seeds.push_back(seed);
                row.map50.push_back(
                    ablate_one(base, src, tgt, val, true, true, true, g, seed, dir + label));
            }
            rows.push_back(std::move(row));
        }
        write_text_file(dir + "/gamma_sweep.csv", csv_gamma(rows));
        std::vector<BarEntry> bars;
        for (const auto& r : rows) {
            char label[16];
            std::snprintf(label, sizeof(label), "%.2f", static_cast<double>(r.gamma));
            bars.push_back({label, r.mean(), stddev(r.map50)});
        }
        write_text_file(dir + "/gamma_sweep.svg",
                        svg_bars(bars, "uncertainty factor sweep (target-val map50)", "map50"));
        std::printf("%s", csv_gamma(rows).c_str());
    }
    return 0;
}

// ---- viz ----

int cmd_viz(const RunConfig& rc, const std::string& ckpt, const std::string& source_manifest,
            const std::string& target_manifest, bool use_teacher, int pca_count, int overlay_count,
            const std::string& out) {
    auto params = detector_params_from_archive(ckpt, rc.train.det,
                                               use_teacher ? "teacher." : "student.", rc.train.seed);
    Detector<float> det(rc.train.det);
    auto src = load_dataset(source_manifest);
    auto tgt = load_dataset(target_manifest);
    ensure_dir(out);

    // PCA scatter of globally pooled P2 features, colored by domain
    int n_src = std::min<int>(pca_count, static_cast<int>(src.size()));
    int n_tgt = std::min<int>(pca_count, static_cast<int>(tgt.size()));
    Tensor<double> feats({n_src + n_tgt, rc.train.det.fpn_ch});
    auto pool_into = [&](const AnnotatedImage& img, int row) {
        Pyramid<float> pyr = det.backbone_forward(params, img.pixels, nullptr);
        const long plane = static_cast<long>(pyr.p2.dim(1)) * pyr.p2.dim(2);
        for (int c = 0; c < rc.train.det.fpn_ch; ++c) {
            double s = 0.0;
            for (long j = 0; j < plane; ++j)
                s += pyr.p2.data[static_cast<size_t>(c) * static_cast<size_t>(plane) +
                                 static_cast<size_t>(j)];
            feats.at(row, c) = s / static_cast<double>(plane);
        }
    };
    for (int i = 0; i < n_src; ++i) pool_into(src[static_cast<size_t>(i)], i);
    for (int i = 0; i < n_tgt; ++i) pool_into(tgt[static_cast<size_t>(i)], n_src + i);
    PcaResult pca = pca_projection(feats, 2);
    std::vector<ScatterPoint> pts;
    for (int i = 0; i < n_src + n_tgt; ++i)
        pts.push_back({pca.projected.at(i, 0), pca.projected.at(i, 1), i < n_src ? 0 : 1});
    write_text_file(out + "/pca.svg",
                    svg_scatter(pts, {"source", "target"}, "pooled P2 features, PCA"));

    // detection overlays (red) with ground truth (green) and mask dumps
    auto dump = [&](const std::vector<AnnotatedImage>& set, const char* prefix) {
        for (int i = 0; i < std::min<int>(overlay_count, static_cast<int>(set.size())); ++i) {
            const auto& img = set[static_cast<size_t>(i)];
            Detections dets = det.detect(params, img.pixels, rc.train.tau, rc.train.eval_nms_thresh,
                                         rc.train.eval_k_max);
            Tensor<float> canvas = img.pixels;
            for (const Box& b : img.boxes_eval()) draw_box_outline(canvas, b, 0.f, 1.f, 0.f);
            for (const Box& b : dets.boxes) draw_box_outline(canvas, b, 1.f, 0.f, 0.f);
            write_ppm(out + "/overlay_" + prefix + "_" + img.id + ".ppm", canvas);

            ForegroundMask m = build_mask(dets.boxes, img.width(), img.height(), rc.train.det.s2,
                                          img.domain == Domain::target);
            Tensor<float> gray({img.height(), img.width()});
            for (int y = 0; y < img.height(); ++y)
                for (int x = 0; x < img.width(); ++x)
                    gray.at(y, x) =
                        m.m[static_cast<size_t>(y / rc.train.det.s2) * m.w +
                            static_cast<size_t>(x / rc.train.det.s2)]
                            ? 1.f
                            : 0.f;
            write_pgm(out + "/mask_" + prefix + "_" + img.id + ".pgm", gray);
        }
    };
    dump(src, "src");
    dump(tgt, "tgt");
    std::printf("viz artifacts -> %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differential feature alignment for domain adaptive detection"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the paired synthetic datasets");
    std::string gen_out = "data";
    int gen_src = 1500, gen_tgt = 1500, gen_val = 300, gen_h = 128, gen_w = 128, gen_classes = 3;
    std::uint64_t gen_seed = 7;
    float gen_beta0 = 1.6f, gen_noise = 0.5f, gen_air = 0.85f;
    gen->add_option("--out", gen_out, "output root directory");
    gen->add_option("--train-source", gen_src, "clean source training images");
    gen->add_option("--train-target", gen_tgt, "fogged target training images");
    gen->add_option("--val", gen_val, "fogged target validation images");
    gen->add_option("--height", gen_h, "image height");
    gen->add_option("--width", gen_w, "image width");
    gen->add_option("--classes", gen_classes, "number of shape classes (2 or 3)");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--beta0", gen_beta0, "fog base attenuation");
    gen->add_option("--fog-noise", gen_noise, "fog field noise amplitude");
    gen->add_option("--airlight", gen_air, "fog airlight in [0,1]");

    // shared train-ish options
    std::string config_path, resume_path;
    std::vector<std::string> sets;

    auto* train = app.add_subcommand("train", "train one run and evaluate it");
    train->add_option("--config", config_path, "key=value config file");
    train->add_option("--set", sets, "override, e.g. --set gamma=0.5 (repeatable)");
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string eval_ckpt, eval_manifest, eval_out;
    bool eval_teacher = false;
    eval->add_option("--config", config_path, "key=value config file");
    eval->add_option("--set", sets, "override (repeatable)");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest to score")->required();
    eval->add_flag("--teacher", eval_teacher, "evaluate the teacher parameters");
    eval->add_option("--out", eval_out, "also write the CSV here");

    auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
    std::string ablate_axis = "modules";
    int ablate_seeds = 3;
    ablate->add_option("--config", config_path, "key=value config file");
    ablate->add_option("--set", sets, "override (repeatable)");
    ablate->add_option("--axis", ablate_axis, "modules | gamma");
    ablate->add_option("--seeds", ablate_seeds, "seeds per grid cell");

    auto* viz = app.add_subcommand("viz", "PCA scatter, detection overlays, mask dumps");
    std::string viz_ckpt, viz_src, viz_tgt, viz_out = "viz";
    bool viz_teacher = false;
    int viz_pca = 100, viz_overlays = 6;
    viz->add_option("--config", config_path, "key=value config file");
    viz->add_option("--set", sets, "override (repeatable)");
    viz->add_option("--checkpoint", viz_ckpt, "checkpoint file")->required();
    viz->add_option("--source", viz_src, "source manifest")->required();
    viz->add_option("--target", viz_tgt, "target manifest")->required();
    viz->add_flag("--teacher", viz_teacher, "use the teacher parameters");
    viz->add_option("--pca-count", viz_pca, "images per domain in the PCA scatter");
    viz->add_option("--overlays", viz_overlays, "overlay/mask dumps per domain");
    viz->add_option("--out", viz_out, "output directory");

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cmd_gen_data(gen_out, gen_src, gen_tgt, gen_val, gen_h, gen_w, gen_classes,
                                gen_seed, gen_beta0, gen_noise, gen_air);
        RunConfig rc = build_run_config(config_path, sets);
        if (train->parsed()) return cmd_train(rc, resume_path);
        if (eval->parsed()) return cmd_eval(rc, eval_ckpt, eval_manifest, eval_teacher, eval_out);
        if (ablate->parsed()) return cmd_ablate(rc, ablate_axis, ablate_seeds);
        if (viz->parsed())
            return cmd_viz(rc, viz_ckpt, viz_src, viz_tgt, viz_teacher, viz_pca, viz_overlays,
                           viz_out);
        return 2;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NanAbort& e) {
        std::fprintf(stderr, "runtime abort: %s\n  %s\n", e.what(), e.diagnostics.c_str());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
