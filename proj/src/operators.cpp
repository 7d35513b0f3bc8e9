#include "apnp/operators.hpp"

#include <cmath>
#include <string>

#include "apnp/errors.hpp"

namespace apnp {

GradientField::GradientField(Image h, Image v) : dh(std::move(h)), dv(std::move(v)) {
  if (!dh.same_shape(dv)) throw SizeError("gradient channels differ in shape");
}

GradientField& GradientField::operator+=(const GradientField& rhs) {
  dh += rhs.dh;
  dv += rhs.dv;
  return *this;
}

GradientField& GradientField::operator-=(const GradientField& rhs) {
  dh -= rhs.dh;
  dv -= rhs.dv;
  return *this;
}

GradientField& GradientField::operator*=(double s) {
  dh *= s;
  dv *= s;
  return *this;
}

GradientField operator+(GradientField lhs, const GradientField& rhs) { return lhs += rhs; }
GradientField operator-(GradientField lhs, const GradientField& rhs) { return lhs -= rhs; }

double dot(const GradientField& a, const GradientField& b) {
  return dot(a.dh, b.dh) + dot(a.dv, b.dv);
}

double squared_norm(const GradientField& a) { return dot(a, a); }
double norm(const GradientField& a) { return std::sqrt(squared_norm(a)); }

double l1_norm(const GradientField& a) {
  double acc = 0.0;
  for (double v : a.dh.values()) acc += std::abs(v);
  for (double v : a.dv.values()) acc += std::abs(v);
  return acc;
}

void DegradationSpec::validate() const {
  if (scale < 1 || scale > 4) {
    throw ParameterError("scale factor must be in {1,2,3,4}, got " + std::to_string(scale));
  }
  if (!(sigma >= 0.0)) throw ParameterError("measurement sigma must be non-negative");
}

GradientField grad(const Image& x) {
  const int h = x.height();
  const int w = x.width();
  GradientField g(h, w);
  for (int i = 0; i < h; ++i) {
    const int down = (i + 1 == h) ? 0 : i + 1;
    for (int j = 0; j < w; ++j) {
      const int right = (j + 1 == w) ? 0 : j + 1;
      g.dh(i, j) = x(i, right) - x(i, j);
      g.dv(i, j) = x(down, j) - x(i, j);
    }
  }
  return g;
}

Image grad_adjoint(const GradientField& g) {
  const int h = g.height();
  const int w = g.width();
  Image out(h, w);
  for (int i = 0; i < h; ++i) {
    const int up = (i == 0) ? h - 1 : i - 1;
    for (int j = 0; j < w; ++j) {
      const int left = (j == 0) ? w - 1 : j - 1;
      out(i, j) = (g.dh(i, left) - g.dh(i, j)) + (g.dv(up, j) - g.dv(i, j));
    }
  }
  return out;
}

Image decimate(const Image& x, int scale) {
  if (x.height() % scale != 0 || x.width() % scale != 0) {
    throw SizeError("image " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                    " is not divisible by scale " + std::to_string(scale));
  }
  Image out(x.height() / scale, x.width() / scale);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) out(i, j) = x(i * scale, j * scale);
  }
  return out;
}

Image zero_fill_upsample(const Image& y, int scale) {
  Image out(y.height() * scale, y.width() * scale);
  for (int i = 0; i < y.height(); ++i) {
    for (int j = 0; j < y.width(); ++j) out(i * scale, j * scale) = y(i, j);
  }
  return out;
}

Image forward_apply(const DegradationSpec& spec, const Image& x) {
  spec.validate();
  if (x.height() % spec.scale != 0 || x.width() % spec.scale != 0) {
    throw SizeError("image dimensions must be multiples of the scale factor");
  }
  Image blurred = circ_conv(x, spec.kernel);
  return spec.scale == 1 ? blurred : decimate(blurred, spec.scale);
}

Image forward_apply(const DegradationSpec& spec, const Image& x, std::uint64_t seed) {
  Image y = forward_apply(spec, x);
  if (spec.sigma > 0.0) y += awgn(y.height(), y.width(), spec.sigma, seed);
  return y;
}

Image forward_adjoint(const DegradationSpec& spec, const Image& y) {
  spec.validate();
  const Image up = spec.scale == 1 ? y : zero_fill_upsample(y, spec.scale);
  return circ_corr(up, spec.kernel);
}

BlurKernel gaussian_kernel(double sigma_x, double sigma_y, double theta, int size) {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) {
    throw ParameterError("gaussian kernel widths must be positive");
  }
  if (size < 1 || size % 2 == 0) {
    throw ParameterError("gaussian kernel size must be odd, got " + std::to_string(size));
  }
  // Inverse covariance of R diag(sx^2, sy^2) R^T.
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double ix = 1.0 / (sigma_x * sigma_x);
  const double iy = 1.0 / (sigma_y * sigma_y);
  const double p_xx = c * c * ix + s * s * iy;
  const double p_yy = s * s * ix + c * c * iy;
  const double p_xy = c * s * (ix - iy);

  const int center = (size - 1) / 2;
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double dy = i - center;
    for (int j = 0; j < size; ++j) {
      const double dx = j - center;
      const double q = p_xx * dx * dx + 2.0 * p_xy * dx * dy + p_yy * dy * dy;
      const double v = std::exp(-0.5 * q);
      taps[static_cast<std::size_t>(i) * size + j] = v;
      total += v;
    }
  }
  for (double& t : taps) t /= total;
  return BlurKernel(size, std::move(taps));
}

}  // namespace apnp
