#include "apnp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "apnp/errors.hpp"

namespace apnp {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering with the 11-tap window.
Image filter_valid(const Image& img, const std::array<double, kWindow>& w) {
  const int h = img.height();
  const int wid = img.width();
  Image rows(h, wid - kWindow + 1);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < rows.width(); ++j) {
      double acc = 0.0;
      for (int b = 0; b < kWindow; ++b) acc += w[b] * img(i, j + b);
      rows(i, j) = acc;
    }
  }
  Image out(h - kWindow + 1, rows.width());
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      double acc = 0.0;
      for (int a = 0; a < kWindow; ++a) acc += w[a] * rows(i + a, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] *= bv[n];
  return out;
}

}  // namespace

Image crop_border(const Image& img, int crop) {
  if (crop < 0 || 2 * crop >= std::min(img.height(), img.width())) {
    throw ParameterError("crop of " + std::to_string(crop) + " pixels leaves nothing of a " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                         " image");
  }
  if (crop == 0) return img;
  Image out(img.height() - 2 * crop, img.width() - 2 * crop);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) out(i, j) = img(i + crop, j + crop);
  }
  return out;
}

double psnr(const Image& a, const Image& b, int crop) {
  if (!a.same_shape(b)) throw SizeError("psnr operands differ in shape");
  const Image ca = crop_border(a, crop);
  const Image cb = crop_border(b, crop);
  double sse = 0.0;
  auto av = ca.values();
  auto bv = cb.values();
  for (std::size_t n = 0; n < av.size(); ++n) {
    const double d = av[n] - bv[n];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrCap;
  const double mse = sse / static_cast<double>(av.size());
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw SizeError("ssim operands differ in shape");
  if (std::min(a.height(), a.width()) < kWindow) {
    throw SizeError("ssim needs images of at least 11x11 pixels");
  }
  const auto w = gaussian_window();
  const Image mu_a = filter_valid(a, w);
  const Image mu_b = filter_valid(b, w);
  const Image e_aa = filter_valid(product(a, a), w);
  const Image e_bb = filter_valid(product(b, b), w);
  const Image e_ab = filter_valid(product(a, b), w);

  double total = 0.0;
  for (std::size_t n = 0; n < mu_a.size(); ++n) {
    const double ma = mu_a.values()[n];
    const double mb = mu_b.values()[n];
    const double var_a = e_aa.values()[n] - ma * ma;
    const double var_b = e_bb.values()[n] - mb * mb;
    const double cov = e_ab.values()[n] - ma * mb;
    total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

MetricReport evaluate(const Image& estimate, const Image& reference, int crop) {
  MetricReport r;
  r.crop_border = crop;
  r.psnr = psnr(estimate, reference, crop);
  r.ssim = ssim(crop_border(estimate, crop), crop_border(reference, crop));
  return r;
}

}  // namespace apnp
