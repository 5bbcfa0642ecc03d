#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dadet {

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError -> 2, NanAbort -> 3, IoError -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// Contract violations between components (mismatched parameter sets, etc.).
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a non-finite loss is detected; carries the diagnostics dump.
struct NanAbort : std::runtime_error {
    std::string diagnostics;
    NanAbort(const std::string& msg, std::string diag)
        : std::runtime_error(msg), diagnostics(std::move(diag)) {}
};

}  // namespace dadet
