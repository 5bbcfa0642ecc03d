#include "dadet/config.hpp"

#include <cstdio>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "dadet/common.hpp"

namespace dadet {

namespace {

float parse_float(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        float x = std::stof(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad float for key '" + key + "': " + v);
    }
}

long parse_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for key '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("bad boolean for key '" + key + "': " + v);
}

std::string fmt_float(float x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x));
    return buf;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    TrainConfig& t = train;
    if (key == "alpha") t.alpha = parse_float(key, value);
    else if (key == "lambda") t.lambda = parse_float(key, value);
    else if (key == "gamma") t.gamma = parse_float(key, value);
    else if (key == "tau") t.tau = parse_float(key, value);
    else if (key == "burn_in_iters") t.burn_in_iters = parse_long(key, value);
    else if (key == "total_iters") t.total_iters = parse_long(key, value);
    else if (key == "lr") t.lr = parse_float(key, value);
    else if (key == "momentum") t.momentum = parse_float(key, value);
    else if (key == "lr_decay_iter") t.lr_decay_iter = parse_long(key, value);
    else if (key == "lr_decay_factor") t.lr_decay_factor = parse_float(key, value);
    else if (key == "batch_source") t.batch_source = static_cast<int>(parse_long(key, value));
    else if (key == "batch_target") t.batch_target = static_cast<int>(parse_long(key, value));
    else if (key == "pdfa_on") t.pdfa_on = parse_bool(key, value);
    else if (key == "ufoa_on") t.ufoa_on = parse_bool(key, value);
    else if (key == "strong_aug_on") t.strong_aug_on = parse_bool(key, value);
    else if (key == "mode") {
        if (value == "full") t.mode = RunMode::full;
        else if (value == "baseline") t.mode = RunMode::baseline;
        else throw ConfigError("bad mode for key 'mode': " + value + " (full|baseline)");
    }
    else if (key == "seed") t.seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "rois_per_image") t.rois_per_image = static_cast<int>(parse_long(key, value));
    else if (key == "rpn_nms_thresh") t.rpn_nms_thresh = parse_float(key, value);
    else if (key == "eval_score_thresh") t.eval_score_thresh = parse_float(key, value);
    else if (key == "eval_nms_thresh") t.eval_nms_thresh = parse_float(key, value);
    else if (key == "eval_k_max") t.eval_k_max = static_cast<int>(parse_long(key, value));
    else if (key == "checkpoint_every") t.checkpoint_every = parse_long(key, value);
    else if (key == "nan_inject_iter") t.nan_inject_iter = parse_long(key, value);
    else if (key == "num_classes") t.det.num_classes = static_cast<int>(parse_long(key, value));
    else if (key == "mask_ratio") t.aug.mask_ratio = parse_float(key, value);
    else if (key == "source_manifest") source_manifest = value;
    else if (key == "target_manifest") target_manifest = value;
    else if (key == "val_manifest") val_manifest = value;
    else if (key == "out_dir") out_dir = value;
    else throw ConfigError("unknown config key: " + key);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    RunConfig rc;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t h = line.find('#');
        if (h != std::string::npos) line.erase(h);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        std::string body = line.substr(a, b - a + 1);
        size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + body);
        std::string key = body.substr(0, eq);
        std::string val = body.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        size_t v0 = val.find_first_not_of(" \t");
        val = v0 == std::string::npos ? "" : val.substr(v0);
        rc.apply(key, val);
    }
    return rc;
}

void apply_overrides(RunConfig& rc, const std::vector<std::string>& assignments) {
    for (const std::string& a : assignments) {
        size_t eq = a.find('=');
        if (eq == std::string::npos) throw ConfigError("override is not key=value: " + a);
        rc.apply(a.substr(0, eq), a.substr(eq + 1));
    }
}

std::string echo_config(const RunConfig& rc) {
    const TrainConfig& t = rc.train;
    std::ostringstream s;
    s << "mode=" << (t.mode == RunMode::full ? "full" : "baseline") << "\n";
    s << "seed=" << t.seed << "\n";
    s << "alpha=" << fmt_float(t.alpha) << "\n";
    s << "lambda=" << fmt_float(t.lambda) << "\n";
    s << "gamma=" << fmt_float(t.gamma) << "\n";
    s << "tau=" << fmt_float(t.tau) << "\n";
    s << "burn_in_iters=" << t.burn_in_iters << "\n";
    s << "total_iters=" << t.total_iters << "\n";
    s << "lr=" << fmt_float(t.lr) << "\n";
    s << "momentum=" << fmt_float(t.momentum) << "\n";
    s << "lr_decay_iter=" << t.lr_decay_iter << "\n";
    s << "lr_decay_factor=" << fmt_float(t.lr_decay_factor) << "\n";
    s << "batch_source=" << t.batch_source << "\n";
    s << "batch_target=" << t.batch_target << "\n";
    s << "pdfa_on=" << (t.pdfa_on ? 1 : 0) << "\n";
    s << "ufoa_on=" << (t.ufoa_on ? 1 : 0) << "\n";
    s << "strong_aug_on=" << (t.strong_aug_on ? 1 : 0) << "\n";
    s << "rois_per_image=" << t.rois_per_image << "\n";
    s << "rpn_nms_thresh=" << fmt_float(t.rpn_nms_thresh) << "\n";
    s << "eval_score_thresh=" << fmt_float(t.eval_score_thresh) << "\n";
    s << "eval_nms_thresh=" << fmt_float(t.eval_nms_thresh) << "\n";
    s << "eval_k_max=" << t.eval_k_max << "\n";
    s << "checkpoint_every=" << t.checkpoint_every << "\n";
    s << "nan_inject_iter=" << t.nan_inject_iter << "\n";
    s << "num_classes=" << t.det.num_classes << "\n";
    s << "mask_ratio=" << fmt_float(t.aug.mask_ratio) << "\n";
    s << "source_manifest=" << rc.source_manifest << "\n";
    s << "target_manifest=" << rc.target_manifest << "\n";
    s << "val_manifest=" << rc.val_manifest << "\n";
    s << "out_dir=" << rc.out_dir << "\n";
    return s.str();
}

std::string run_id(const RunConfig& rc) {
    std::string echo = echo_config(rc);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : echo) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dadet
