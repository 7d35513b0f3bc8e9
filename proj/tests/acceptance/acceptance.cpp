// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <unsupported/Eigen/FFT>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "apnp/bench.hpp"
#include "apnp/io.hpp"
#include "apnp/metrics.hpp"
#include "apnp/pnp.hpp"
#include "apnp/subproblem.hpp"
#include "support/oracles.hpp"

using namespace apnp;
using namespace apnp::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kData = APNP_TEST_DATA;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Adjoint identities <Ax, y> = <x, A^T y> on random pairs.
Outcome adjoint() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst_grad = 0.0;
  double worst_fwd = 0.0;
  int trials = 0;
  for (int s : {1, 2, 3}) {
    std::uniform_int_distribution<int> blocks(1, 64 / s);
    for (int trial = 0; trial < 100; ++trial) {
      const int h = trial == 0 ? s * (64 / s) : s * blocks(rng);
      const int w = trial == 0 ? s * (64 / s) : s * blocks(rng);
      const Image x = random_image(h, w, rng, -1.0, 1.0);
      const GradientField g = random_field(h, w, rng);
      const double gl = dot(grad(x), g);
      const double gr = dot(x, grad_adjoint(g));
      worst_grad = std::max(worst_grad, std::abs(gl - gr) / std::max(std::abs(gl), 1e-300));

      const int ksize = std::min(7, 2 * ((std::min(h, w) - 1) / 2) + 1);
      const DegradationSpec spec{random_kernel(ksize, rng), s, 0.0};
      const Image y = random_image(h / s, w / s, rng, -1.0, 1.0);
      const double fl = dot(forward_apply(spec, x), y);
      const double fr = dot(x, forward_adjoint(spec, y));
      worst_fwd = std::max(worst_fwd, std::abs(fl - fr) / std::max(std::abs(fl), 1e-300));
      ++trials;
    }
  }
  const double secs = seconds_since(t0);
  return {worst_grad < 1e-10 && worst_fwd < 1e-10 && secs < 5.0,
          fmt("%d trials each, worst rel. discrepancy grad %.2e forward %.2e, %.2f s", trials,
              worst_grad, worst_fwd, secs)};
}

// Closed-form solvers against dense normal-equation solves.
Outcome subproblem_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1002);
  std::uniform_int_distribution<int> half(0, 2);
  std::uniform_real_distribution<double> log_alpha(-3.0, 1.0);
  std::map<std::string, int> counts;
  std::map<std::string, double> worst;
  for (int size : {8, 12}) {
    for (int s : {1, 2, 3}) {
      if (size % s != 0) continue;
      const int reps = s == 3 ? 40 : 20;
      for (int rep = 0; rep < reps; ++rep) {
        const BlurKernel k = random_kernel(2 * half(rng) + 1, rng);
        const Image y = random_image(size / s, size / s, rng);
        const GradientField z = random_field(size, size, rng);
        const Image zi = random_image(size, size, rng);
        const double alpha = std::pow(10.0, log_alpha(rng));
        const SolverContext ctx(k, size, size, s);
        const Eigen::MatrixXd a = dense_forward(k, size, size, s);
        const Eigen::VectorXd want_g =
            dense_normal_solve(a, to_vec(y), dense_grad(size, size), to_vec(z), alpha);
        const Eigen::VectorXd want_i = dense_normal_solve(
            a, to_vec(y), Eigen::MatrixXd::Identity(size * size, size * size), to_vec(zi), alpha);
        const std::string gname = s == 1 ? "grad_deblur" : "grad_sr";
        const std::string iname = s == 1 ? "image_deblur" : "image_sr";
        const Image got_g = s == 1 ? solve_grad_deblur(ctx, y, z, alpha)
                                   : solve_grad_sr(ctx, y, z, alpha);
        const Image got_i = s == 1 ? solve_image_deblur(ctx, y, zi, alpha)
                                   : solve_image_sr(ctx, y, zi, alpha);
        worst[gname] = std::max(worst[gname], rel_err(to_vec(got_g), want_g));
        worst[iname] = std::max(worst[iname], rel_err(to_vec(got_i), want_i));
        ++counts[gname];
        ++counts[iname];
      }
    }
  }
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  std::string detail;
  for (const auto& [name, n] : counts) {
    ok = ok && n >= 20 && worst[name] < 1e-5;
    detail += fmt("%s %d inst. worst %.1e; ", name.c_str(), n, worst[name]);
  }
  return {ok, detail + fmt("%.1f s", secs)};
}

// --- independent anisotropic TV deconvolution (Chambolle-Pock) -------------

using Cx = std::complex<double>;
using CxGrid = std::vector<Cx>;

CxGrid fft_2d(const std::vector<Cx>& in, int h, int w, bool inverse) {
  Eigen::FFT<double> fft;
  CxGrid out = in;
  std::vector<Cx> line_in, line_out;
  for (int i = 0; i < h; ++i) {
    line_in.assign(out.begin() + i * w, out.begin() + (i + 1) * w);
    inverse ? fft.inv(line_out, line_in) : fft.fwd(line_out, line_in);
    std::copy(line_out.begin(), line_out.end(), out.begin() + i * w);
  }
  line_in.resize(h);
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) line_in[i] = out[i * w + j];
    inverse ? fft.inv(line_out, line_in) : fft.fwd(line_out, line_in);
    for (int i = 0; i < h; ++i) out[i * w + j] = line_out[i];
  }
  return out;
}

struct TvProblem {
  int n = 64;
  BlurKernel k = BlurKernel::identity();
  Image y;
  double sigma = 0.0;  // data weight 1 / (2 sigma^2)
  double mu = 0.0;     // TV weight

  double objective(const Image& x) const {
    const DegradationSpec spec{k, 1, 0.0};
    return 0.5 * squared_norm(forward_apply(spec, x) - y) / (sigma * sigma) +
           mu * l1_norm(grad(x));
  }
};

// Spatial-domain differences written out independently of the library.
void diff(const std::vector<double>& x, int n, std::vector<double>& gh, std::vector<double>& gv) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      gh[i * n + j] = x[i * n + (j + 1) % n] - x[i * n + j];
      gv[i * n + j] = x[((i + 1) % n) * n + j] - x[i * n + j];
    }
  }
}

void diff_adjoint(const std::vector<double>& gh, const std::vector<double>& gv, int n,
                  std::vector<double>& out) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out[i * n + j] = gh[i * n + (j + n - 1) % n] - gh[i * n + j] +
                       gv[((i + n - 1) % n) * n + j] - gv[i * n + j];
    }
  }
}

Image chambolle_pock_tv(const TvProblem& p, int iterations) {
  const int n = p.n;
  const int nn = n * n;
  // Transfer function of the periodic blur with the kernel centre at (0, 0).
  CxGrid kpad(nn, 0.0);
  const int c = (p.k.size() - 1) / 2;
  for (int a = 0; a < p.k.size(); ++a) {
    for (int b = 0; b < p.k.size(); ++b) {
      kpad[mod(a - c, n) * n + mod(b - c, n)] += p.k(a, b);
    }
  }
  const CxGrid kf = fft_2d(kpad, n, n, false);
  CxGrid yc(nn);
  for (int i = 0; i < nn; ++i) yc[i] = p.y.values()[i];
  const CxGrid yf = fft_2d(yc, n, n, false);

  const double tau = 0.02;
  const double step = 0.99 / (8.0 * tau);
  const double wdata = 1.0 / (p.sigma * p.sigma);
  std::vector<double> x(p.y.values().begin(), p.y.values().end());
  std::vector<double> xbar = x, ph(nn, 0.0), pv(nn, 0.0), gh(nn), gv(nn), dtp(nn);
  CxGrid v(nn);
  for (int it = 0; it < iterations; ++it) {
    diff(xbar, n, gh, gv);
    for (int i = 0; i < nn; ++i) {
      ph[i] = std::clamp(ph[i] + step * gh[i], -p.mu, p.mu);
      pv[i] = std::clamp(pv[i] + step * gv[i], -p.mu, p.mu);
    }
    diff_adjoint(ph, pv, n, dtp);
    for (int i = 0; i < nn; ++i) v[i] = x[i] - tau * dtp[i];
    CxGrid vf = fft_2d(v, n, n, false);
    for (int i = 0; i < nn; ++i) {
      vf[i] = (vf[i] + tau * wdata * std::conj(kf[i]) * yf[i]) / (1.0 + tau * wdata * std::norm(kf[i]));
    }
    const CxGrid xn = fft_2d(vf, n, n, true);
    for (int i = 0; i < nn; ++i) {
      const double next = xn[i].real();
      xbar[i] = 2.0 * next - x[i];
      x[i] = next;
    }
  }
  Image out(n, n);
  std::copy(x.begin(), x.end(), out.values().begin());
  return out;
}

// Mid-range smooth content, so clipping of the final output stays inert.
Image smooth_scene(int n, Rng& rng) {
  return circ_conv(random_image(n, n, rng, 0.3, 0.7), gaussian_kernel(1.0, 1.0, 0.0, 5));
}

Outcome tv_oracle() {
  Rng rng(1003);
  TvProblem p;
  const Image truth = smooth_scene(p.n, rng);
  const DegradationSpec spec{gaussian_kernel(1.2, 1.2, 0.0, 7), 1, 0.01};
  p.k = spec.kernel;
  p.y = forward_apply(spec, truth, 17);
  p.sigma = spec.sigma;

  const double w = 20.0;
  RunConfig hqs = RunConfig::defaults(Algorithm::apnp_hqs);
  hqs.fixed_prior_sigma = 0.004;
  hqs.iterations = 2000;
  p.mu = hqs.lambda * w;
  const Image x_hqs =
      run(hqs, spec, p.y, Denoiser::soft_threshold(w, DenoiserDomain::gradient)).image;
  const Image x_ref = chambolle_pock_tv(p, 20000);
  const double f_hqs = p.objective(x_hqs);
  const double f_ref = p.objective(x_ref);
  const double f_half = p.objective(chambolle_pock_tv(p, 10000));
  const double gap = (f_hqs - f_ref) / f_ref;

  // Same TV problem: the prior level only sets the ADMM penalty.
  RunConfig admm = RunConfig::defaults(Algorithm::apnp_admm);
  admm.fixed_prior_sigma = 0.03;
  admm.iterations = 500;
  const RunResult r =
      run(admm, spec, p.y, Denoiser::soft_threshold(w, DenoiserDomain::gradient));
  double residual = 1e300;
  int first_below = -1;
  for (const IterationRecord& rec : r.trace.records) {
    residual = rec.split_residual;
    if (first_below < 0 && residual < 1e-5) first_below = rec.iteration;
  }
  const double f_admm = p.objective(r.image);
  const bool oracle_converged = std::abs(f_half - f_ref) / f_ref < 1e-4;
  return {std::abs(gap) < 5e-3 && oracle_converged && residual < 1e-5,
          fmt("HQS objective %.6g vs oracle %.6g (rel. %.2e, oracle drift %.1e); "
              "ADMM residual %.2e after 500 it. (first < 1e-5 at %d), objective %.6g",
              f_hqs, f_ref, gap, std::abs(f_half - f_ref) / f_ref, residual, first_below,
              f_admm)};
}

Outcome noise_variance() {
  const double sigma = 25.0 / 255.0;
  const GradientField g = grad(awgn(256, 256, sigma, 2024));
  double worst = 0.0;
  std::string detail;
  for (const Image* ch : {&g.dh, &g.dv}) {
    const double m = mean(*ch);
    double var = 0.0;
    for (double v : ch->values()) var += (v - m) * (v - m);
    var /= static_cast<double>(ch->size() - 1);
    const double ratio = var / (2.0 * sigma * sigma);
    worst = std::max(worst, std::abs(ratio - 1.0));
    detail += fmt("%s var/(2 sigma^2) = %.4f; ", ch == &g.dh ? "dh" : "dv", ratio);
  }
  return {worst <= 0.05, detail + "256x256"};
}

Outcome fixed_points() {
  Rng rng(1005);
  const Image y = random_image(32, 32, rng);
  double worst = 0.0;
  for (Algorithm a : {Algorithm::apnp_hqs, Algorithm::apnp_admm, Algorithm::pnp_hqs,
                      Algorithm::pnp_admm}) {
    const RunResult r = run(RunConfig::defaults(a), DegradationSpec{}, y,
                            Denoiser::identity(denoiser_domain(a)));
    for (std::size_t n = 0; n < y.size(); ++n) {
      worst = std::max(worst, std::abs(r.image.values()[n] - y.values()[n]));
    }
  }
  return {worst < 1e-10, fmt("four drivers, worst max-abs deviation %.2e", worst)};
}

BenchSpec grid_spec(bool neural) {
  BenchSpec spec;
  spec.dataset_dir = kData / "testset";
  spec.kernels = BenchSpec::default_kernels();
  spec.seed = 7;
  if (neural) {
    spec.gradient_denoiser = Denoiser::neural(kData / "gradient_desk.apnpw");
    spec.image_denoiser = Denoiser::neural(kData / "image_desk.apnpw");
    spec.scales = {2};
    spec.noise_levels_8bit = {0.0};
  } else {
    spec.gradient_denoiser = Denoiser::soft_threshold(20.0, DenoiserDomain::gradient);
    spec.image_denoiser = Denoiser::soft_threshold(0.2, DenoiserDomain::image);
  }
  return spec;
}

bool table_structure(const std::string& table, std::string& why) {
  const std::vector<std::string> columns{"DPIR", "APnP-HQS", "PnP-ADMM", "APnP-ADMM"};
  for (const std::string block : {"SSIM", "PSNR"}) {
    const auto at = table.find(block);
    if (at == std::string::npos) {
      why = "missing " + block + " block";
      return false;
    }
    const auto header_end = table.find('\n', table.find("DPIR", at));
    const std::string header = table.substr(at, header_end - at);
    std::size_t last = 0;
    for (const std::string& c : columns) {
      const auto pos = header.find(c, last);
      if (pos == std::string::npos) {
        why = block + " header lacks ordered column " + c;
        return false;
      }
      last = pos + c.size();
    }
    std::size_t cursor = header_end + 1;
    for (int sf : {1, 2, 3}) {
      for (const std::string noise : {"0", "7.65"}) {
        const auto eol = table.find('\n', cursor);
        std::istringstream row(table.substr(cursor, eol - cursor));
        std::vector<std::string> tokens{std::istream_iterator<std::string>(row), {}};
        std::vector<std::string> want_head{noise};
        if (noise == "0") want_head.insert(want_head.begin(), std::to_string(sf));
        const bool ok = tokens.size() == want_head.size() + 4 &&
                        std::equal(want_head.begin(), want_head.end(), tokens.begin());
        if (!ok) {
          why = block + " row for SF " + std::to_string(sf) + " noise " + noise + " malformed";
          return false;
        }
        cursor = eol + 1;
      }
    }
  }
  return true;
}

double mean_psnr(const BenchReport& r, Algorithm a) {
  const BenchCell* c = r.cell(2, 0.0, a);
  return c ? c->mean_psnr : -1.0;
}

Outcome table_one(const BenchReport& grid) {
  std::string why;
  bool ok = table_structure(report_table(grid), why);
  for (const BenchCell& c : grid.cells) {
    if (c.runs != 3 * 8 || c.failures != 0) {
      ok = false;
      why = "cell with " + std::to_string(c.runs) + " runs";
    }
  }
  ok = ok && grid.cells.size() == 3 * 2 * 4;

  const auto t0 = std::chrono::steady_clock::now();
  const BenchSpec spec = grid_spec(true);
  const BenchReport desk = run_bench(spec);
  // Bicubic initialization on the same noiseless SF 2 measurements.
  double bicubic = 0.0;
  int count = 0;
  for (const fs::path& p : list_dataset(spec.dataset_dir)) {
    const Image x = center_crop_to_multiple(read_image(p), 2);
    for (const BenchKernel& k : spec.kernels) {
      const DegradationSpec d{k.kernel, 2, 0.0};
      bicubic += psnr(initialize(d, forward_apply(d, x)), x, 2);
      ++count;
    }
  }
  bicubic /= count;
  const double hqs = mean_psnr(desk, Algorithm::apnp_hqs);
  const double admm = mean_psnr(desk, Algorithm::apnp_admm);
  const double dpir = mean_psnr(desk, Algorithm::pnp_hqs);
  const double pnp_admm = mean_psnr(desk, Algorithm::pnp_admm);
  const bool bar = hqs - bicubic >= 0.5 && std::abs(hqs - dpir) <= 1.5 &&
                   std::abs(admm - pnp_admm) <= 1.5 && !desk.any_cell_failed();
  return {ok && bar,
          (ok ? std::string("grid 3 SF x 2 noise x 4 algorithms, 24 runs per cell; ")
              : "structure: " + why + "; ") +
              fmt("desk SF2 sigma0 PSNR: bicubic %.2f, APnP-HQS %.2f (%+.2f), DPIR %.2f, "
                  "APnP-ADMM %.2f, PnP-ADMM %.2f; %.0f s",
                  bicubic, hqs, hqs - bicubic, dpir, admm, pnp_admm, seconds_since(t0))};
}

Outcome determinism(const BenchReport& first) {
  BenchSpec spec = grid_spec(false);
  spec.threads = 1;
  const std::string a = report_csv(first);
  const std::string b = report_csv(run_bench(spec));
  return {a == b, fmt("two runs (%d and 1 workers), %zu-byte reports %s", 0, a.size(),
                      a == b ? "identical" : "differ")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };

  report("adjoint-correctness", adjoint);
  report("subproblem-oracle", subproblem_oracle);
  report("tv-oracle-and-admm-residual", tv_oracle);
  report("noise-variance-doubling", noise_variance);
  report("identity-fixed-points", fixed_points);

  std::optional<BenchReport> grid;
  auto grid_run = [&]() -> const BenchReport& {
    if (!grid) grid = run_bench(grid_spec(false));
    return *grid;
  };
  report("table-1-structure-and-desk-bar", [&] { return table_one(grid_run()); });
  report("determinism", [&] { return determinism(grid_run()); });
  return failures == 0 ? 0 : 1;
}
