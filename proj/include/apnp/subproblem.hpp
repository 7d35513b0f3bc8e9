#pragma once

#include "apnp/imgcore.hpp"
#include "apnp/operators.hpp"

namespace apnp {

/// Fourier diagonalization of the blur kernel and the two difference
/// filters for one high-resolution image shape and scale factor.
///
/// Immutable once built; a new context is needed whenever the shape, kernel
/// or scale changes.
class SolverContext {
 public:
  SolverContext(const BlurKernel& kernel, int height, int width, int scale = 1);
  SolverContext(const DegradationSpec& spec, int height, int width)
      : SolverContext(spec.kernel, height, width, spec.scale) {}

  int height() const { return height_; }
  int width() const { return width_; }
  int scale() const { return scale_; }
  int low_height() const { return height_ / scale_; }
  int low_width() const { return width_ / scale_; }

  const Spectrum& otf() const { return otf_; }
  const Spectrum& lambda_h() const { return lambda_h_; }
  const Spectrum& lambda_v() const { return lambda_v_; }
  /// |lambda_h|^2 + |lambda_v|^2 per bin (Fourier symbol of D^T D).
  const std::vector<double>& grad_energy() const { return grad_energy_; }

 private:
  int height_;
  int width_;
  int scale_;
  Spectrum otf_;
  Spectrum lambda_h_;
  Spectrum lambda_v_;
  std::vector<double> grad_energy_;
};

/// How solve_grad_sr treats each aliasing block.
enum class SrPath {
  fast,       ///< Sherman-Morrison where eligible, dense solve otherwise
  reference,  ///< dense s^2 x s^2 solve for every block
};

/// argmin_x ||k*x - y||^2 + alpha ||Dx - z||^2 (scale 1).
Image solve_grad_deblur(const SolverContext& ctx, const Image& y, const GradientField& z,
                        double alpha);

/// argmin_x ||S(k*x) - y||^2 + alpha ||Dx - z||^2 (scale >= 2).
Image solve_grad_sr(const SolverContext& ctx, const Image& y, const GradientField& z,
                    double alpha, SrPath path = SrPath::fast);

/// argmin_x ||k*x - y||^2 + alpha ||x - z||^2 (scale 1).
Image solve_image_deblur(const SolverContext& ctx, const Image& y, const Image& z, double alpha);

/// argmin_x ||S(k*x) - y||^2 + alpha ||x - z||^2 (scale >= 2).
Image solve_image_sr(const SolverContext& ctx, const Image& y, const Image& z, double alpha);

/// Dispatch on ctx.scale().
Image solve_grad(const SolverContext& ctx, const Image& y, const GradientField& z, double alpha);
Image solve_image(const SolverContext& ctx, const Image& y, const Image& z, double alpha);

}  // namespace apnp
