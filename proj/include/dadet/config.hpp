#pragma once

// Run configuration: a flat key=value file plus CLI overrides (override wins).
// The effective config is echoed into every run directory and the echo
// re-parses to an identical RunConfig; the run id is a hash of the echo.

#include <string>
#include <utility>
#include <vector>

#include "dadet/trainer.hpp"

namespace dadet {

struct RunConfig {
    TrainConfig train;
    std::string source_manifest;
    std::string target_manifest;
    std::string val_manifest;
    std::string out_dir = "runs/run";

    // Applies one key=value assignment. Throws ConfigError naming the key on
    // an unknown key or an unparseable value.
    void apply(const std::string& key, const std::string& value);
};

// Parses a config file: '#' comments, blank lines, key=value otherwise.
RunConfig load_run_config(const std::string& path);

// Splits "key=value" and applies each pair in order.
void apply_overrides(RunConfig& rc, const std::vector<std::string>& assignments);

// Full key=value listing of the effective config, one key per line.
std::string echo_config(const RunConfig& rc);

// FNV-1a 64-bit hash of the echo, as 16 hex digits.
std::string run_id(const RunConfig& rc);

}  // namespace dadet
