#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace apnp {

using Complex = std::complex<double>;

/// Single-channel 2-D real field stored row-major.
///
/// Used for images in [0, 1] as well as for measurements, noise fields and
/// the individual channels of a gradient field.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0);
  Image(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * width_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * width_ + j]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  Image& operator+=(const Image& rhs);
  Image& operator-=(const Image& rhs);
  Image& operator*=(double s);

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

Image operator+(Image lhs, const Image& rhs);
Image operator-(Image lhs, const Image& rhs);
Image operator*(double s, Image rhs);

double dot(const Image& a, const Image& b);
double squared_norm(const Image& a);
double norm(const Image& a);
double mean(const Image& a);
bool all_finite(const Image& a);
Image clip(Image a, double lo, double hi);

/// Unnormalized 2-D Fourier coefficients, row-major.
class Spectrum {
 public:
  Spectrum() = default;
  Spectrum(int height, int width, Complex fill = {});

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  Complex& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * width_ + j]; }
  Complex operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * width_ + j]; }

  std::span<Complex> values() { return data_; }
  std::span<const Complex> values() const { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Complex> data_;
};

/// Square point-spread function with odd side; taps are row-major.
class BlurKernel {
 public:
  BlurKernel() = default;
  /// Throws ParameterError unless size is odd and taps.size() == size*size.
  BlurKernel(int size, std::vector<double> taps);

  static BlurKernel identity();

  int size() const { return size_; }
  int center() const { return (size_ - 1) / 2; }
  double operator()(int i, int j) const { return taps_[static_cast<std::size_t>(i) * size_ + j]; }
  const std::vector<double>& taps() const { return taps_; }
  double sum() const;

 private:
  int size_ = 0;
  std::vector<double> taps_;
};

/// Forward DFT without scaling.
Spectrum fft2(const Image& img);
/// Inverse DFT including the 1/(HW) factor; returns the real part.
Image ifft2(const Spectrum& spec);
Spectrum ifft2_complex(const Spectrum& spec);

/// Zero-pads k to height x width with its center tap circularly shifted to
/// (0, 0), then transforms. Throws SizeError if the kernel does not fit.
Spectrum psf2otf(const BlurKernel& k, int height, int width);

/// Periodic convolution computed in the spatial domain.
Image circ_conv(const Image& img, const BlurKernel& k);
/// Periodic correlation (adjoint of circ_conv).
Image circ_corr(const Image& img, const BlurKernel& k);

/// Seeded i.i.d. Gaussian noise.
///
/// Samples come from std::mt19937_64 (whose output sequence is fixed by the
/// standard) transformed with Box-Muller on 53-bit uniforms, so a seed gives
/// the same field on every conforming platform.
Image awgn(int height, int width, double sigma, std::uint64_t seed);

}  // namespace apnp
