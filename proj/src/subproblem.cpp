#include "apnp/subproblem.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "apnp/errors.hpp"

namespace apnp {

namespace {

constexpr double kMinDenominator = 1e-12;

Spectrum difference_otf(int height, int width, bool horizontal) {
  // Impulse response of x -> x(next) - x(here) under periodic wrap.
  Image impulse(height, width);
  impulse(0, 0) = -1.0;
  if (horizontal) {
    impulse(0, width - 1) += 1.0;
  } else {
    impulse(height - 1, 0) += 1.0;
  }
  return fft2(impulse);
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("penalty weight alpha must be positive, got " + std::to_string(alpha));
  }
}

void check_high_res(const SolverContext& ctx, int height, int width, const char* what) {
  if (height != ctx.height() || width != ctx.width()) {
    throw SizeError(std::string(what) + " is " + std::to_string(height) + "x" +
                    std::to_string(width) + ", solver context expects " +
                    std::to_string(ctx.height()) + "x" + std::to_string(ctx.width()));
  }
}

void check_low_res(const SolverContext& ctx, const Image& y) {
  if (y.height() != ctx.low_height() || y.width() != ctx.low_width()) {
    throw SizeError("measurement is " + std::to_string(y.height()) + "x" +
                    std::to_string(y.width()) + ", expected " + std::to_string(ctx.low_height()) +
                    "x" + std::to_string(ctx.low_width()));
  }
}

// Fourier transform of the zero-filled upsampling of y: the low-resolution
// spectrum tiled s times along each axis.
Spectrum upsampled_spectrum(const Image& y, int scale) {
  const Spectrum low = fft2(y);
  Spectrum out(y.height() * scale, y.width() * scale);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) out(i, j) = low(i % y.height(), j % y.width());
  }
  return out;
}

// Right-hand side conj(K) F(S^T y) + alpha * prior_rhs.
Spectrum data_rhs(const SolverContext& ctx, const Image& y) {
  Spectrum rhs = ctx.scale() == 1 ? fft2(y) : upsampled_spectrum(y, ctx.scale());
  auto r = rhs.values();
  auto k = ctx.otf().values();
  for (std::size_t n = 0; n < r.size(); ++n) r[n] *= std::conj(k[n]);
  return rhs;
}

void add_grad_rhs(const SolverContext& ctx, const GradientField& z, double alpha, Spectrum& rhs) {
  const Spectrum zh = fft2(z.dh);
  const Spectrum zv = fft2(z.dv);
  auto r = rhs.values();
  auto lh = ctx.lambda_h().values();
  auto lv = ctx.lambda_v().values();
  auto fh = zh.values();
  auto fv = zv.values();
  for (std::size_t n = 0; n < r.size(); ++n) {
    r[n] += alpha * (std::conj(lh[n]) * fh[n] + std::conj(lv[n]) * fv[n]);
  }
}

void add_image_rhs(const Image& z, double alpha, Spectrum& rhs) {
  const Spectrum fz = fft2(z);
  auto r = rhs.values();
  auto f = fz.values();
  for (std::size_t n = 0; n < r.size(); ++n) r[n] += alpha * f[n];
}

// Per-bin division for scale 1; `prior` is the Fourier symbol of the prior's
// normal operator (|Lh|^2+|Lv|^2, or 1 for the image-domain splitting).
template <typename PriorSymbol>
Image divide_diagonal(const SolverContext& ctx, Spectrum rhs, double alpha, PriorSymbol prior) {
  auto r = rhs.values();
  auto k = ctx.otf().values();
  for (std::size_t n = 0; n < r.size(); ++n) {
    const double den = std::norm(k[n]) + alpha * prior(n);
    if (den < kMinDenominator) {
      const int i = static_cast<int>(n / ctx.width());
      const int j = static_cast<int>(n % ctx.width());
      throw IllPosedError("normal-equation denominator vanishes at frequency bin (" +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    r[n] /= den;
  }
  return ifft2(rhs);
}

// Solves the s^2-coupled systems ((1/s^2) conj(d) d^T + alpha diag(prior)) x = r
// for every aliasing block. Blocks are indexed by their low-resolution
// frequency (p, q); members are (p + a*h, q + b*w).
template <typename PriorSymbol>
Image solve_aliased_blocks(const SolverContext& ctx, Spectrum rhs, double alpha,
                           PriorSymbol prior, SrPath path) {
  const int s = ctx.scale();
  const int h = ctx.low_height();
  const int w = ctx.low_width();
  const int width = ctx.width();
  const int members = s * s;
  const double inv_s2 = 1.0 / static_cast<double>(members);
  const auto otf = ctx.otf().values();
  auto r = rhs.values();

  std::vector<std::size_t> index(members);
  Eigen::VectorXcd d(members);
  Eigen::VectorXcd rb(members);
  Eigen::VectorXd diag(members);
  Eigen::MatrixXcd dense(members, members);

  for (int p = 0; p < h; ++p) {
    for (int q = 0; q < w; ++q) {
      bool fast_eligible = path == SrPath::fast;
      for (int a = 0; a < s; ++a) {
        for (int b = 0; b < s; ++b) {
          const int m = a * s + b;
          const std::size_t n = static_cast<std::size_t>(p + a * h) * width + (q + b * w);
          index[m] = n;
          d(m) = otf[n];
          rb(m) = r[n];
          diag(m) = alpha * prior(n);
          if (!(diag(m) > 0.0)) fast_eligible = false;
        }
      }

      Eigen::VectorXcd xb(members);
      if (fast_eligible) {
        // Sherman-Morrison on diag + u v^T with u = conj(d)/s^2, v = d.
        Eigen::VectorXcd dinv_r = rb.cwiseQuotient(diag.cast<Complex>());
        Eigen::VectorXcd dinv_u = d.conjugate().cwiseQuotient(diag.cast<Complex>()) * inv_s2;
        const Complex vt_dinv_r = d.transpose() * dinv_r;
        const Complex vt_dinv_u = d.transpose() * dinv_u;
        xb = dinv_r - dinv_u * (vt_dinv_r / (1.0 + vt_dinv_u));
      } else {
        dense = (d.conjugate() * d.transpose()) * inv_s2;
        dense.diagonal() += diag.cast<Complex>();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(dense);
        lu.setThreshold(kMinDenominator);
        if (!lu.isInvertible()) {
          throw IllPosedError("aliasing block at low-resolution frequency (" + std::to_string(p) +
                              ", " + std::to_string(q) + ") is singular");
        }
        xb = lu.solve(rb);
      }
      for (int m = 0; m < members; ++m) r[index[m]] = xb(m);
    }
  }
  return ifft2(rhs);
}

}  // namespace

SolverContext::SolverContext(const BlurKernel& kernel, int height, int width, int scale)
    : height_(height), width_(width), scale_(scale) {
  if (scale < 1 || scale > 4) {
    throw ParameterError("scale factor must be in {1,2,3,4}, got " + std::to_string(scale));
  }
  if (height < 1 || width < 1 || height % scale != 0 || width % scale != 0) {
    throw SizeError("solver shape " + std::to_string(height) + "x" + std::to_string(width) +
                    " must be positive multiples of scale " + std::to_string(scale));
  }
  otf_ = psf2otf(kernel, height, width);
  lambda_h_ = difference_otf(height, width, true);
  lambda_v_ = difference_otf(height, width, false);
  grad_energy_.resize(otf_.size());
  auto lh = lambda_h_.values();
  auto lv = lambda_v_.values();
  for (std::size_t n = 0; n < grad_energy_.size(); ++n) {
    grad_energy_[n] = std::norm(lh[n]) + std::norm(lv[n]);
  }
  // Exact zero at DC; rounding would otherwise leave ~1e-32 there.
  grad_energy_[0] = 0.0;
}

Image solve_grad_deblur(const SolverContext& ctx, const Image& y, const GradientField& z,
                        double alpha) {
  check_alpha(alpha);
  if (ctx.scale() != 1) throw ParameterError("solve_grad_deblur requires scale 1");
  check_high_res(ctx, y.height(), y.width(), "measurement");
  check_high_res(ctx, z.height(), z.width(), "gradient target");
  Spectrum rhs = data_rhs(ctx, y);
  add_grad_rhs(ctx, z, alpha, rhs);
  const auto& energy = ctx.grad_energy();
  return divide_diagonal(ctx, std::move(rhs), alpha, [&](std::size_t n) { return energy[n]; });
}

Image solve_grad_sr(const SolverContext& ctx, const Image& y, const GradientField& z,
                    double alpha, SrPath path) {
  check_alpha(alpha);
  if (ctx.scale() < 2) throw ParameterError("solve_grad_sr requires scale >= 2");
  check_low_res(ctx, y);
  check_high_res(ctx, z.height(), z.width(), "gradient target");
  Spectrum rhs = data_rhs(ctx, y);
  add_grad_rhs(ctx, z, alpha, rhs);
  const auto& energy = ctx.grad_energy();
  return solve_aliased_blocks(ctx, std::move(rhs), alpha,
                              [&](std::size_t n) { return energy[n]; }, path);
}

Image solve_image_deblur(const SolverContext& ctx, const Image& y, const Image& z, double alpha) {
  check_alpha(alpha);
  if (ctx.scale() != 1) throw ParameterError("solve_image_deblur requires scale 1");
  check_high_res(ctx, y.height(), y.width(), "measurement");
  check_high_res(ctx, z.height(), z.width(), "image target");
  Spectrum rhs = data_rhs(ctx, y);
  add_image_rhs(z, alpha, rhs);
  return divide_diagonal(ctx, std::move(rhs), alpha, [](std::size_t) { return 1.0; });
}

Image solve_image_sr(const SolverContext& ctx, const Image& y, const Image& z, double alpha) {
  check_alpha(alpha);
  if (ctx.scale() < 2) throw ParameterError("solve_image_sr requires scale >= 2");
  check_low_res(ctx, y);
  check_high_res(ctx, z.height(), z.width(), "image target");
  Spectrum rhs = data_rhs(ctx, y);
  add_image_rhs(z, alpha, rhs);
  return solve_aliased_blocks(ctx, std::move(rhs), alpha, [](std::size_t) { return 1.0; },
                              SrPath::fast);
}

Image solve_grad(const SolverContext& ctx, const Image& y, const GradientField& z, double alpha) {
  return ctx.scale() == 1 ? solve_grad_deblur(ctx, y, z, alpha)
                          : solve_grad_sr(ctx, y, z, alpha);
}

Image solve_image(const SolverContext& ctx, const Image& y, const Image& z, double alpha) {
  return ctx.scale() == 1 ? solve_image_deblur(ctx, y, z, alpha)
                          : solve_image_sr(ctx, y, z, alpha);
}

}  // namespace apnp
