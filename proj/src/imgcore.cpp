#include "apnp/imgcore.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <tuple>

#include "apnp/errors.hpp"

namespace apnp {

Image::Image(int height, int width, double fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  if (height < 0 || width < 0) throw SizeError("negative image dimension");
}

Image::Image(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0 ||
      data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw SizeError("image data length does not match " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
}

Image& Image::operator+=(const Image& rhs) {
  if (!same_shape(rhs)) throw SizeError("image shapes differ in +=");
  for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += rhs.data_[n];
  return *this;
}

Image& Image::operator-=(const Image& rhs) {
  if (!same_shape(rhs)) throw SizeError("image shapes differ in -=");
  for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= rhs.data_[n];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image operator+(Image lhs, const Image& rhs) { return lhs += rhs; }
Image operator-(Image lhs, const Image& rhs) { return lhs -= rhs; }
Image operator*(double s, Image rhs) { return rhs *= s; }

double dot(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw SizeError("image shapes differ in dot");
  double acc = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t n = 0; n < av.size(); ++n) acc += av[n] * bv[n];
  return acc;
}

double squared_norm(const Image& a) { return dot(a, a); }
double norm(const Image& a) { return std::sqrt(squared_norm(a)); }

double mean(const Image& a) {
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return acc / static_cast<double>(a.size());
}

bool all_finite(const Image& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

Image clip(Image a, double lo, double hi) {
  for (double& v : a.values()) v = std::clamp(v, lo, hi);
  return a;
}

Spectrum::Spectrum(int height, int width, Complex fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
  if (height < 0 || width < 0) throw SizeError("negative spectrum dimension");
}

BlurKernel::BlurKernel(int size, std::vector<double> taps) : size_(size), taps_(std::move(taps)) {
  if (size < 1 || size % 2 == 0) {
    throw ParameterError("blur kernel size must be odd and positive, got " + std::to_string(size));
  }
  if (taps_.size() != static_cast<std::size_t>(size) * size) {
    throw ParameterError("blur kernel tap count does not match size");
  }
}

BlurKernel BlurKernel::identity() { return BlurKernel(1, {1.0}); }

double BlurKernel::sum() const {
  double acc = 0.0;
  for (double t : taps_) acc += t;
  return acc;
}

namespace {

// FFTW's planner is not reentrant; execution on fresh arrays is. Plans are
// created once per (shape, direction) under a lock and reused.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int height, int width, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(height, width, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(height) * width;
    fftw_complex* in = fftw_alloc_complex(n);
    fftw_complex* out = fftw_alloc_complex(n);
    fftw_plan plan =
        fftw_plan_dft_2d(height, width, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void transform(std::span<const Complex> in, std::span<Complex> out, int height, int width,
               int sign) {
  fftw_plan plan = plan_cache().get(height, width, sign);
  // fftw_execute_dft takes a non-const input pointer but does not modify it
  // for out-of-place complex transforms.
  fftw_execute_dft(plan,
                   reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

int wrap(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

void check_kernel_fits(const BlurKernel& k, int height, int width) {
  if (k.size() > std::min(height, width)) {
    throw SizeError("kernel of size " + std::to_string(k.size()) + " does not fit a " +
                    std::to_string(height) + "x" + std::to_string(width) + " image");
  }
}

}  // namespace

Spectrum fft2(const Image& img) {
  if (img.height() < 1 || img.width() < 1) throw SizeError("fft2 of an empty image");
  std::vector<Complex> in(img.values().begin(), img.values().end());
  Spectrum out(img.height(), img.width());
  transform(in, out.values(), img.height(), img.width(), FFTW_FORWARD);
  return out;
}

Spectrum ifft2_complex(const Spectrum& spec) {
  if (spec.height() < 1 || spec.width() < 1) throw SizeError("ifft2 of an empty spectrum");
  Spectrum out(spec.height(), spec.width());
  transform(spec.values(), out.values(), spec.height(), spec.width(), FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(spec.size());
  for (Complex& c : out.values()) c *= scale;
  return out;
}

Image ifft2(const Spectrum& spec) {
  Spectrum full = ifft2_complex(spec);
  Image out(spec.height(), spec.width());
  auto src = full.values();
  auto dst = out.values();
  for (std::size_t n = 0; n < dst.size(); ++n) dst[n] = src[n].real();
  return out;
}

Spectrum psf2otf(const BlurKernel& k, int height, int width) {
  check_kernel_fits(k, height, width);
  Image padded(height, width);
  const int c = k.center();
  for (int i = 0; i < k.size(); ++i) {
    for (int j = 0; j < k.size(); ++j) {
      padded(wrap(i - c, height), wrap(j - c, width)) += k(i, j);
    }
  }
  return fft2(padded);
}

Image circ_conv(const Image& img, const BlurKernel& k) {
  check_kernel_fits(k, img.height(), img.width());
  const int h = img.height();
  const int w = img.width();
  const int c = k.center();
  Image out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int a = 0; a < k.size(); ++a) {
        const int row = wrap(i - (a - c), h);
        for (int b = 0; b < k.size(); ++b) {
          acc += k(a, b) * img(row, wrap(j - (b - c), w));
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Image circ_corr(const Image& img, const BlurKernel& k) {
  check_kernel_fits(k, img.height(), img.width());
  const int h = img.height();
  const int w = img.width();
  const int c = k.center();
  Image out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int a = 0; a < k.size(); ++a) {
        const int row = wrap(i + (a - c), h);
        for (int b = 0; b < k.size(); ++b) {
          acc += k(a, b) * img(row, wrap(j + (b - c), w));
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Image awgn(int height, int width, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ParameterError("noise sigma must be non-negative");
  Image out(height, width);
  if (sigma == 0.0) return out;
  std::mt19937_64 engine(seed);
  auto uniform = [&engine]() {
    // 53 random bits -> (0, 1]
    return (static_cast<double>(engine() >> 11) + 1.0) * 0x1.0p-53;
  };
  auto values = out.values();
  for (std::size_t n = 0; n < values.size(); n += 2) {
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    values[n] = sigma * radius * std::cos(angle);
    if (n + 1 < values.size()) values[n + 1] = sigma * radius * std::sin(angle);
  }
  return out;
}

}  // namespace apnp
