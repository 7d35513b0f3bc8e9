#include "apnp/pnp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>

#include "apnp/metrics.hpp"
#include "apnp/subproblem.hpp"

namespace apnp {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::apnp_hqs: return "apnp-hqs";
    case Algorithm::apnp_admm: return "apnp-admm";
    case Algorithm::pnp_hqs: return "pnp-hqs";
    case Algorithm::pnp_admm: return "pnp-admm";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '_', '-');
  for (Algorithm a : {Algorithm::apnp_hqs, Algorithm::apnp_admm, Algorithm::pnp_hqs,
                      Algorithm::pnp_admm}) {
    if (n == to_string(a)) return a;
  }
  if (n == "dpir") return Algorithm::pnp_hqs;
  throw ParameterError("unknown algorithm '" + name + "'");
}

DenoiserDomain denoiser_domain(Algorithm a) {
  return (a == Algorithm::apnp_hqs || a == Algorithm::apnp_admm) ? DenoiserDomain::gradient
                                                                  : DenoiserDomain::image;
}

Schedule make_schedule(double sigma, int iterations, double lambda, double sigma_max,
                       double scale, double sigma_floor) {
  if (iterations < 1) throw ParameterError("schedule needs at least one iteration");
  if (!(sigma >= 0.0)) throw ParameterError("measurement sigma must be non-negative");
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  if (!(scale > 0.0)) throw ParameterError("schedule scale must be positive");
  if (!(sigma_floor > 0.0) && !(sigma > 0.0)) {
    throw ParameterError("noiseless measurements need a positive sigma floor");
  }
  Schedule s;
  s.lambda = lambda;
  s.sigma_eff = std::max(sigma, sigma_floor);
  const double top = std::log(std::max(sigma_max, s.sigma_eff));
  const double bottom = std::log(s.sigma_eff);
  s.sigmas.resize(iterations);
  s.alphas.resize(iterations);
  for (int t = 0; t < iterations; ++t) {
    const double frac = iterations == 1 ? 1.0 : static_cast<double>(t) / (iterations - 1);
    s.sigmas[t] = scale * std::exp(top + frac * (bottom - top));
    s.alphas[t] = lambda * s.sigma_eff * s.sigma_eff / (s.sigmas[t] * s.sigmas[t]);
  }
  return s;
}

Schedule make_fixed_schedule(double sigma, int iterations, double lambda, double prior_sigma,
                             double sigma_floor) {
  if (!(prior_sigma > 0.0)) throw ParameterError("fixed prior sigma must be positive");
  Schedule s = make_schedule(sigma, iterations, lambda, prior_sigma, 1.0, sigma_floor);
  std::fill(s.sigmas.begin(), s.sigmas.end(), prior_sigma);
  std::fill(s.alphas.begin(), s.alphas.end(),
            lambda * s.sigma_eff * s.sigma_eff / (prior_sigma * prior_sigma));
  return s;
}

RunConfig RunConfig::defaults(Algorithm algorithm) {
  RunConfig c;
  c.algorithm = algorithm;
  switch (algorithm) {
    case Algorithm::apnp_hqs: c.lambda = 0.18; break;
    case Algorithm::apnp_admm: c.lambda = 0.24; break;
    case Algorithm::pnp_hqs: c.lambda = 0.23; break;
    case Algorithm::pnp_admm: c.lambda = 0.38; break;
  }
  c.schedule_scale = algorithm == Algorithm::apnp_hqs ? std::sqrt(2.0) : 1.0;
  return c;
}

void RunConfig::validate() const {
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  if (iterations < 1) throw ParameterError("iterations must be at least 1");
  if (!(schedule_scale > 0.0)) throw ParameterError("schedule scale must be positive");
  if (!(sigma_floor >= 0.0)) throw ParameterError("sigma floor must be non-negative");
}

Schedule RunConfig::schedule(double measurement_sigma) const {
  validate();
  if (fixed_prior_sigma) {
    return make_fixed_schedule(measurement_sigma, iterations, lambda, *fixed_prior_sigma,
                               sigma_floor);
  }
  return make_schedule(measurement_sigma, iterations, lambda, sigma_max, schedule_scale,
                       sigma_floor);
}

std::string RunTrace::to_json() const {
  nlohmann::json j;
  j["algorithm"] = to_string(algorithm);
  j["lambda"] = lambda;
  j["sigma_eff"] = sigma_eff;
  j["denoiser"] = denoiser;
  j["warnings"] = warnings;
  nlohmann::json rows = nlohmann::json::array();
  for (const IterationRecord& r : records) {
    nlohmann::json row = {{"t", r.iteration},
                          {"sigma", r.sigma},
                          {"alpha", r.alpha},
                          {"data_fidelity", r.data_fidelity},
                          {"split_residual", r.split_residual}};
    if (r.psnr) row["psnr"] = *r.psnr;
    rows.push_back(std::move(row));
  }
  j["iterations"] = std::move(rows);
  return j.dump(1);
}

namespace {

double keys_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

// Interpolation taps for output index n: source indices floor(n/s)-1..+2.
struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> cubic_taps(int out_size, int in_size, int scale) {
  std::vector<Taps> taps(out_size);
  for (int n = 0; n < out_size; ++n) {
    const double pos = static_cast<double>(n) / scale;
    const int base = n / scale;
    const double frac = pos - base;
    for (int m = 0; m < 4; ++m) {
      taps[n].index[m] = std::clamp(base - 1 + m, 0, in_size - 1);
      taps[n].weight[m] = keys_weight(frac - (m - 1));
    }
  }
  return taps;
}

}  // namespace

Image bicubic_upsample(const Image& y, int scale) {
  if (scale < 1) throw ParameterError("upsampling scale must be positive");
  if (scale == 1) return y;
  const auto row_taps = cubic_taps(y.height() * scale, y.height(), scale);
  const auto col_taps = cubic_taps(y.width() * scale, y.width(), scale);
  Image horizontal(y.height(), y.width() * scale);
  for (int i = 0; i < y.height(); ++i) {
    for (int j = 0; j < horizontal.width(); ++j) {
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) acc += col_taps[j].weight[m] * y(i, col_taps[j].index[m]);
      horizontal(i, j) = acc;
    }
  }
  Image out(y.height() * scale, y.width() * scale);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) acc += row_taps[i].weight[m] * horizontal(row_taps[i].index[m], j);
      out(i, j) = acc;
    }
  }
  return out;
}

Image initialize(const DegradationSpec& spec, const Image& y) {
  spec.validate();
  return spec.scale == 1 ? y : bicubic_upsample(y, spec.scale);
}

namespace {

struct GradientSplit {
  using Field = GradientField;
  static constexpr DenoiserDomain domain = DenoiserDomain::gradient;
  static Field analyze(const Image& x) { return grad(x); }
  static Image solve(const SolverContext& ctx, const Image& y, const Field& target, double a) {
    return solve_grad(ctx, y, target, a);
  }
};

struct ImageSplit {
  using Field = Image;
  static constexpr DenoiserDomain domain = DenoiserDomain::image;
  static Field analyze(const Image& x) { return x; }
  static Image solve(const SolverContext& ctx, const Image& y, const Field& target, double a) {
    return solve_image(ctx, y, target, a);
  }
};

Image apply_measurement(const SolverContext& ctx, const Image& x) {
  Spectrum f = fft2(x);
  auto fv = f.values();
  auto k = ctx.otf().values();
  for (std::size_t n = 0; n < fv.size(); ++n) fv[n] *= k[n];
  Image blurred = ifft2(f);
  return ctx.scale() == 1 ? blurred : decimate(blurred, ctx.scale());
}

// Shared driver state: validation, schedule, context, trace bookkeeping.
class Driver {
 public:
  Driver(const RunConfig& cfg, Algorithm algorithm, const DegradationSpec& spec, const Image& y,
         const Denoiser& denoiser, DenoiserDomain wanted, const Image* ground_truth)
      : spec_(spec), y_(y), ground_truth_(ground_truth),
        schedule_((cfg.validate(), spec.validate(), cfg.schedule(spec.sigma))),
        ctx_(spec.kernel, y.height() * spec.scale, y.width() * spec.scale, spec.scale) {
    if (denoiser.domain() != wanted) {
      throw DomainError(to_string(algorithm) + " needs a " + to_string(wanted) +
                        "-domain denoiser, got " + denoiser.describe());
    }
    if (ground_truth_ && (ground_truth_->height() != ctx_.height() ||
                          ground_truth_->width() != ctx_.width())) {
      throw SizeError("ground truth shape does not match the reconstruction grid");
    }
    trace_.algorithm = algorithm;
    trace_.lambda = schedule_.lambda;
    trace_.sigma_eff = schedule_.sigma_eff;
    trace_.denoiser = denoiser.describe();
  }

  const SolverContext& ctx() const { return ctx_; }
  const Schedule& schedule() const { return schedule_; }
  const Image& y() const { return y_; }
  WarningLog* log() { return &trace_.warnings; }

  void record(int t, const Image& x, double split_residual) {
    IterationRecord r;
    r.iteration = t + 1;
    r.sigma = schedule_.sigmas[t];
    r.alpha = schedule_.alphas[t];
    const Image residual = apply_measurement(ctx_, x) - y_;
    r.data_fidelity = 0.5 * squared_norm(residual) / (schedule_.sigma_eff * schedule_.sigma_eff);
    r.split_residual = split_residual;
    if (ground_truth_) r.psnr = psnr(clip(x, 0.0, 1.0), *ground_truth_);
    trace_.records.push_back(r);
  }

  RunResult finish(const Image& x) { return RunResult{clip(x, 0.0, 1.0), std::move(trace_)}; }

  Image x0() const { return initialize(spec_, y_); }

 private:
  const DegradationSpec& spec_;
  const Image& y_;
  const Image* ground_truth_;
  Schedule schedule_;
  SolverContext ctx_;
  RunTrace trace_;
};

template <typename Split>
RunResult run_hqs(const RunConfig& cfg, Algorithm algorithm, const DegradationSpec& spec,
                  const Image& y, const Denoiser& denoiser, const Image* ground_truth) {
  Driver driver(cfg, algorithm, spec, y, denoiser, Split::domain, ground_truth);
  Image x = driver.x0();
  const Schedule& sched = driver.schedule();
  for (int t = 0; t < sched.iterations(); ++t) {
    try {
      const typename Split::Field z =
          denoise(denoiser, Split::analyze(x), sched.sigmas[t], driver.log());
      x = Split::solve(driver.ctx(), driver.y(), z, sched.alphas[t]);
      driver.record(t, x, norm(z - Split::analyze(x)));
    } catch (const IterationError&) {
      throw;
    } catch (const Error& e) {
      throw IterationError(t + 1, e.what());
    }
  }
  return driver.finish(x);
}

template <typename Split>
RunResult run_admm(const RunConfig& cfg, Algorithm algorithm, const DegradationSpec& spec,
                   const Image& y, const Denoiser& denoiser, const Image* ground_truth) {
  Driver driver(cfg, algorithm, spec, y, denoiser, Split::domain, ground_truth);
  Image x = driver.x0();
  typename Split::Field dual = Split::analyze(x);
  dual *= 0.0;
  const Schedule& sched = driver.schedule();
  for (int t = 0; t < sched.iterations(); ++t) {
    try {
      const typename Split::Field z =
          denoise(denoiser, Split::analyze(x) - dual, sched.sigmas[t], driver.log());
      x = Split::solve(driver.ctx(), driver.y(), z + dual, sched.alphas[t]);
      const typename Split::Field gap = z - Split::analyze(x);
      dual += gap;
      driver.record(t, x, norm(gap));
    } catch (const IterationError&) {
      throw;
    } catch (const Error& e) {
      throw IterationError(t + 1, e.what());
    }
  }
  return driver.finish(x);
}

}  // namespace

RunResult run_apnp_hqs(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                       const Denoiser& denoiser, const Image* ground_truth) {
  return run_hqs<GradientSplit>(cfg, Algorithm::apnp_hqs, spec, y, denoiser, ground_truth);
}

RunResult run_apnp_admm(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                        const Denoiser& denoiser, const Image* ground_truth) {
  return run_admm<GradientSplit>(cfg, Algorithm::apnp_admm, spec, y, denoiser, ground_truth);
}

RunResult run_pnp_hqs(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                      const Denoiser& denoiser, const Image* ground_truth) {
  return run_hqs<ImageSplit>(cfg, Algorithm::pnp_hqs, spec, y, denoiser, ground_truth);
}

RunResult run_pnp_admm(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
                       const Denoiser& denoiser, const Image* ground_truth) {
  return run_admm<ImageSplit>(cfg, Algorithm::pnp_admm, spec, y, denoiser, ground_truth);
}

RunResult run(const RunConfig& cfg, const DegradationSpec& spec, const Image& y,
              const Denoiser& denoiser, const Image* ground_truth) {
  switch (cfg.algorithm) {
    case Algorithm::apnp_hqs: return run_apnp_hqs(cfg, spec, y, denoiser, ground_truth);
    case Algorithm::apnp_admm: return run_apnp_admm(cfg, spec, y, denoiser, ground_truth);
    case Algorithm::pnp_hqs: return run_pnp_hqs(cfg, spec, y, denoiser, ground_truth);
    case Algorithm::pnp_admm: return run_pnp_admm(cfg, spec, y, denoiser, ground_truth);
  }
  throw ParameterError("unknown algorithm");
}

}  // namespace apnp
