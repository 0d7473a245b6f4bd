#pragma once

#include <string>

#include "gcanet/tensor.hpp"

namespace gcanet {

// 8-bit RGB PNG -> (1,3,h,w) tensor in [0,1]; grayscale/palette/alpha inputs
// are expanded to RGB on read.
Tensor read_png(const std::string& path);

// (1,3,h,w) tensor, clamped to [0,1] and quantized to 8-bit RGB. Fixed encoder
// settings keep the output byte-identical for identical input.
void write_png(const std::string& path, const Tensor& image);

}  // namespace gcanet
