#pragma once

#include <cstdint>

#include "apnp/imgcore.hpp"

namespace apnp {

/// Periodic forward differences of an image: the analysis variable Dx.
struct GradientField {
  Image dh;  ///< dh(i, j) = x(i, j+1) - x(i, j), columns wrapping
  Image dv;  ///< dv(i, j) = x(i+1, j) - x(i, j), rows wrapping

  GradientField() = default;
  GradientField(int height, int width) : dh(height, width), dv(height, width) {}
  GradientField(Image h, Image v);

  int height() const { return dh.height(); }
  int width() const { return dh.width(); }
  bool same_shape(const GradientField& o) const { return dh.same_shape(o.dh); }

  GradientField& operator+=(const GradientField& rhs);
  GradientField& operator-=(const GradientField& rhs);
  GradientField& operator*=(double s);
};

GradientField operator+(GradientField lhs, const GradientField& rhs);
GradientField operator-(GradientField lhs, const GradientField& rhs);

double dot(const GradientField& a, const GradientField& b);
double squared_norm(const GradientField& a);
double norm(const GradientField& a);
double l1_norm(const GradientField& a);

/// Blur kernel, integer decimation factor and measurement noise level that
/// together define the measurement operator A and the noise model.
struct DegradationSpec {
  BlurKernel kernel = BlurKernel::identity();
  int scale = 1;
  double sigma = 0.0;

  /// Throws ParameterError when scale is not in {1,..,4} or sigma < 0.
  void validate() const;
};

GradientField grad(const Image& x);
Image grad_adjoint(const GradientField& g);

/// y = (x conv k) decimated by s (keeping index 0 mod s) plus AWGN(sigma, seed).
Image forward_apply(const DegradationSpec& spec, const Image& x, std::uint64_t seed);
/// Noiseless forward model.
Image forward_apply(const DegradationSpec& spec, const Image& x);
/// Zero-fill upsampling followed by periodic correlation with the kernel.
Image forward_adjoint(const DegradationSpec& spec, const Image& y);

Image decimate(const Image& x, int scale);
Image zero_fill_upsample(const Image& y, int scale);

/// Rotated bivariate Gaussian sampled on a size x size grid, normalized to
/// unit sum. sigma_x is the spread along the direction at angle theta.
BlurKernel gaussian_kernel(double sigma_x, double sigma_y, double theta, int size);

}  // namespace apnp
