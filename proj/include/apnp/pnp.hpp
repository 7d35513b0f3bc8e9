#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "apnp/denoise.hpp"
#include "apnp/imgcore.hpp"
#include "apnp/operators.hpp"

namespace apnp {

enum class Algorithm { apnp_hqs, apnp_admm, pnp_hqs, pnp_admm };

std::string to_string(Algorithm a);
/// Accepts "apnp-hqs" / "apnp_hqs" style names. Throws ParameterError.
Algorithm parse_algorithm(const std::string& name);
/// Gradient domain for the analysis variants, image domain otherwise.
DenoiserDomain denoiser_domain(Algorithm a);

inline constexpr double kDefaultSigmaFloor = 1.0 / 255.0;
inline constexpr double kDefaultSigmaMax = 49.0 / 255.0;

/// Per-iteration prior noise levels and the matching penalty weights.
struct Schedule {
  std::vector<double> sigmas;
  std::vector<double> alphas;
  double sigma_eff = 0.0;  ///< measurement noise after applying the floor
  double lambda = 0.0;

  int iterations() const { return static_cast<int>(sigmas.size()); }
};

/// Log-uniform schedule from scale*sigma_max down to scale*sigma_eff, with
/// sigma_eff = max(sigma, sigma_floor) and alpha_t = lambda sigma_eff^2 / sigma_t^2.
/// A sigma_max below sigma_eff is raised to sigma_eff.
Schedule make_schedule(double sigma, int iterations, double lambda,
                       double sigma_max = kDefaultSigmaMax, double scale = 1.0,
                       double sigma_floor = kDefaultSigmaFloor);

/// Constant prior level for every iteration (convex / convergence studies).
Schedule make_fixed_schedule(double sigma, int iterations, double lambda, double prior_sigma,
                             double sigma_floor = kDefaultSigmaFloor);

struct RunConfig {
  Algorithm algorithm = Algorithm::apnp_hqs;
  double lambda = 0.18;
  int iterations = 24;
  double sigma_floor = kDefaultSigmaFloor;
  double sigma_max = kDefaultSigmaMax;
  double schedule_scale = std::sqrt(2.0);
  /// When set, every iteration uses this prior level instead of the schedule.
  std::optional<double> fixed_prior_sigma;
  std::uint64_t seed = 0;

  /// lambda 0.18 / 0.24 / 0.23 / 0.38 and schedule scale sqrt(2) for
  /// APnP-HQS, 1 for the others.
  static RunConfig defaults(Algorithm algorithm);
  void validate() const;
  Schedule schedule(double measurement_sigma) const;
};

struct IterationRecord {
  int iteration = 0;  ///< 1-based
  double sigma = 0.0;
  double alpha = 0.0;
  double data_fidelity = 0.0;     ///< 0.5 sigma_eff^-2 ||Ax - y||^2
  double split_residual = 0.0;    ///< ||z - Dx|| or ||z - x||
  std::optional<double> psnr;     ///< vs ground truth, when supplied
};

struct RunTrace {
  Algorithm algorithm = Algorithm::apnp_hqs;
  double lambda = 0.0;
  double sigma_eff = 0.0;
  std::string denoiser;
  std::vector<IterationRecord> records;
  WarningLog warnings;

  /// One JSON object; consumed by CLI reports.
  std::string to_json() const;
};

struct RunResult {
  Image image;  ///< clipped to [0, 1]
  RunTrace trace;
};

/// An error raised inside a driver, tagged with the 1-based iteration.
class IterationError : public Error {
 public:
  IterationError(int iteration, const std::string& what)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Bicubic (Keys, a = -0.5) upsampling that places low-resolution sample
/// (i, j) at high-resolution pixel (s*i, s*j), matching the decimation
/// phase of the forward model. Edges are clamped.
Image bicubic_upsample(const Image& y, int scale);

/// x_0: y itself for deblurring, bicubic upsampling for super-resolution.
Image initialize(const DegradationSpec& spec, const Image& y);

RunResult run_apnp_hqs(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                       const Denoiser& denoiser, const Image* ground_truth = nullptr);
RunResult run_apnp_admm(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                        const Denoiser& denoiser, const Image* ground_truth = nullptr);
RunResult run_pnp_hqs(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                      const Denoiser& denoiser, const Image* ground_truth = nullptr);
RunResult run_pnp_admm(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                       const Denoiser& denoiser, const Image* ground_truth = nullptr);

/// Dispatches on cfg.algorithm.
RunResult run(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
              const Denoiser& denoiser, const Image* ground_truth = nullptr);

}  // namespace apnp
