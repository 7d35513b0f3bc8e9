#pragma once

#include "apnp/imgcore.hpp"

namespace apnp {

/// Reported when the two images are identical.
inline constexpr double kPsnrCap = 100.0;

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  int crop_border = 0;
};

/// 10 log10(1 / MSE) over the region left after removing `crop` pixels
/// from every side; dynamic range 1.
double psnr(const Image& a, const Image& b, int crop = 0);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Only windows fully inside the image count.
double ssim(const Image& a, const Image& b);

Image crop_border(const Image& img, int crop);

/// PSNR and SSIM of the mutually cropped images.
MetricReport evaluate(const Image& estimate, const Image& reference, int crop);

}  // namespace apnp
