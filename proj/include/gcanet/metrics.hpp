#pragma once

#include "gcanet/tensor.hpp"

namespace gcanet {

// 10·log10(1/MSE) with peak 1. Identical images report the 99 dB sentinel so
// aggregate means stay finite.
double psnr(const Tensor& a, const Tensor& b);

// mean local SSIM on the luma plane, 11x11 Gaussian window sigma 1.5,
// K1=0.01 K2=0.03, dynamic range 1. Throws if the image is smaller than the
// window.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace gcanet
