#pragma once

#include "tsdq/types.hpp"

namespace tsdq {

/// 10 * log10(data_range^2 / MSE); +infinity when the images are equal.
double psnr(const Image& x, const Image& ref, double data_range);

/// Mean structural similarity over all fully-interior 11x11 windows with a
/// sigma = 1.5 Gaussian weight, C1 = (0.01 L)^2, C2 = (0.03 L)^2.
double ssim(const Image& x, const Image& ref, double data_range);

}  // namespace tsdq
