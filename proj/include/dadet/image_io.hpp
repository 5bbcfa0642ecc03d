#pragma once

// Lossless raster I/O: binary PPM (P6) for color images whose values sit on
// the 1/255 grid, little-endian PFM for float fields, and PGM (P5) for mask
// dumps. All loaders throw IoError naming the offending path.

#include <string>

#include "dadet/tensor.hpp"

namespace dadet {

// pixels {3, H, W} in [0,1], quantized to k/255 — asserted on write so the
// round trip is exact.
void write_ppm(const std::string& path, const Tensor<float>& pixels);
Tensor<float> read_ppm(const std::string& path);

// field {H, W}, arbitrary finite floats.
void write_pfm(const std::string& path, const Tensor<float>& field);
Tensor<float> read_pfm(const std::string& path);

// gray {H, W} in [0,1] (quantized on write; for visual dumps only).
void write_pgm(const std::string& path, const Tensor<float>& gray);

}  // namespace dadet
