#pragma once

#include <string>

#include "dscl/tensor.hpp"

namespace dscl {

// Reads a binary PGM (P5) or PPM (P6), 8- or 16-bit, mapping sample values
// to [0,1]. Output is H x W x 1 or H x W x 3.
TensorF read_netpbm(const std::string& path);

// 8-bit binary PPM from an H x W x 3 image with values in [0,1].
void write_ppm8(const std::string& path, const TensorF& image);

// 16-bit binary PGM from an H x W x 1 map; values are scaled so the map
// maximum hits 65535 (8-bit quantization destroys AUC resolution).
void write_pgm16(const std::string& path, const TensorF& map);

}  // namespace dscl
