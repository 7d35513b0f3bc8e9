#pragma once

#include <memory>
#include <string>
#include <vector>

#include "apnp/imgcore.hpp"
#include "apnp/operators.hpp"
#include "apnp/weights.hpp"

namespace apnp {

enum class DenoiserKind { identity, soft_threshold, neural };

/// An immutable prior D(v, sigma) acting either on gradient fields or on
/// images. Cheap to copy; neural handles share their archive.
class Denoiser {
 public:
  static Denoiser identity(DenoiserDomain domain);
  /// Elementwise shrinkage by weight * sigma^2, the proximal map of
  /// weight * ||.||_1 with step sigma^2.
  static Denoiser soft_threshold(double weight, DenoiserDomain domain);
  static Denoiser neural(std::shared_ptr<const WeightArchive> archive);
  static Denoiser neural(const std::filesystem::path& archive_path);

  DenoiserKind kind() const { return kind_; }
  DenoiserDomain domain() const { return domain_; }
  double weight() const { return weight_; }
  const WeightArchive* archive() const { return archive_.get(); }
  std::string describe() const;

 private:
  Denoiser(DenoiserKind kind, DenoiserDomain domain) : kind_(kind), domain_(domain) {}

  DenoiserKind kind_;
  DenoiserDomain domain_;
  double weight_ = 0.0;
  std::shared_ptr<const WeightArchive> archive_;
};

/// Receives non-fatal notices (e.g. sigma outside a network's training range).
using WarningLog = std::vector<std::string>;

GradientField denoise(const Denoiser& d, const GradientField& input, double sigma,
                      WarningLog* log = nullptr);
Image denoise(const Denoiser& d, const Image& input, double sigma, WarningLog* log = nullptr);

/// sign(v) * max(|v| - threshold, 0)
double shrink(double v, double threshold);

}  // namespace apnp
