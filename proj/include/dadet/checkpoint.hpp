#pragma once

// A minimal binary archive of named float arrays plus string metadata —
// checkpoints carry both parameter sets, optimizer state and the iteration
// counter, so a resumed run continues bit-identically.

#include <map>
#include <string>
#include <vector>

#include "dadet/tensor.hpp"

namespace dadet {

struct Archive {
    std::map<std::string, Tensor<float>> arrays;
    std::map<std::string, std::string> meta;
};

void write_archive(const std::string& path, const Archive& archive);
Archive read_archive(const std::string& path);

}  // namespace dadet
