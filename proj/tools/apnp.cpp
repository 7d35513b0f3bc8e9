#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "apnp/bench.hpp"
#include "apnp/errors.hpp"
#include "apnp/io.hpp"
#include "apnp/metrics.hpp"
#include "apnp/pnp.hpp"
#include "apnp/weights.hpp"

namespace fs = std::filesystem;
using namespace apnp;

namespace {

constexpr int kUsageExit = 2;

struct RestoreArgs {
  std::string input;
  std::string out;
  std::string algo = "apnp-hqs";
  std::string denoiser;
  std::string kernel = "builtin:identity";
  int sf = 1;
  double noise = 0.0;
  std::optional<double> lambda;
  int iters = 24;
  std::optional<double> schedule_scale;
  double sigma_floor = kDefaultSigmaFloor;
  std::uint64_t seed = 0;
  std::string gt;
  std::string trace;
};

struct DegradeArgs {
  std::string input;
  std::string out;
  std::string kernel = "builtin:identity";
  int sf = 1;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct BenchArgs {
  std::string dataset;
  std::string out;
  std::string kernels;
  std::vector<int> sf{1, 2, 3};
  std::vector<double> noise{0.0, 7.65};
  std::vector<std::string> algos{"pnp-hqs", "apnp-hqs", "pnp-admm", "apnp-admm"};
  std::string grad_denoiser;
  std::string image_denoiser;
  int iters = 24;
  double sigma_floor = kDefaultSigmaFloor;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct KernelArgs {
  std::string out;
  std::string manifest;
};

std::string default_denoiser(Algorithm a) {
  return denoiser_domain(a) == DenoiserDomain::gradient ? "soft:20" : "soft:0.2";
}

int cmd_restore(const RestoreArgs& args) {
  Algorithm algo;
  try {
    algo = parse_algorithm(args.algo);
  } catch (const ParameterError& e) {
    std::cerr << "apnp restore: " << e.what() << "\n";
    return kUsageExit;
  }
  const Image y = read_image(args.input);
  DegradationSpec spec;
  spec.kernel = resolve_kernel(args.kernel);
  spec.scale = args.sf;
  spec.sigma = args.noise / 255.0;
  spec.validate();

  RunConfig cfg = RunConfig::defaults(algo);
  if (args.lambda) cfg.lambda = *args.lambda;
  if (args.schedule_scale) cfg.schedule_scale = *args.schedule_scale;
  cfg.iterations = args.iters;
  cfg.sigma_floor = args.sigma_floor;
  cfg.seed = args.seed;

  const std::string dspec = args.denoiser.empty() ? default_denoiser(algo) : args.denoiser;
  const Denoiser denoiser = parse_denoiser(dspec, denoiser_domain(algo));

  std::optional<Image> gt;
  if (!args.gt.empty()) gt = read_image(args.gt);
  const RunResult result = run(cfg, spec, y, denoiser, gt ? &*gt : nullptr);
  write_image(args.out, result.image);

  const fs::path trace_path = args.trace.empty() ? fs::path(args.out + ".trace.json") : fs::path(args.trace);
  std::ofstream(trace_path) << result.trace.to_json() << "\n";
  for (const std::string& w : result.trace.warnings) std::cerr << "warning: " << w << "\n";

  if (gt) {
    const MetricReport m = evaluate(result.image, *gt, args.sf);
    std::printf("psnr %.4f\nssim %.6f\n", m.psnr, m.ssim);
  }
  return 0;
}

int cmd_degrade(const DegradeArgs& args) {
  DegradationSpec spec;
  spec.kernel = resolve_kernel(args.kernel);
  spec.scale = args.sf;
  spec.sigma = args.noise / 255.0;
  spec.validate();
  const Image x = center_crop_to_multiple(read_image(args.input), args.sf);
  write_image(args.out, forward_apply(spec, x, args.seed));
  return 0;
}

std::vector<BenchKernel> load_bench_kernels(const std::string& manifest) {
  if (manifest.empty()) return BenchSpec::default_kernels();
  std::vector<BenchKernel> kernels;
  const fs::path dir = fs::path(manifest).parent_path();
  for (const auto& [file, params] : read_kernel_manifest(manifest)) {
    kernels.push_back({fs::path(file).stem().string(), read_kernel(dir / file), params});
  }
  return kernels;
}

int cmd_bench(const BenchArgs& args) {
  BenchSpec spec;
  spec.algorithms.clear();
  try {
    for (const std::string& a : args.algos) spec.algorithms.push_back(parse_algorithm(a));
  } catch (const ParameterError& e) {
    std::cerr << "apnp bench: " << e.what() << "\n";
    return kUsageExit;
  }
  spec.dataset_dir = args.dataset;
  spec.kernels = load_bench_kernels(args.kernels);
  spec.scales = args.sf;
  spec.noise_levels_8bit = args.noise;
  spec.seed = args.seed;
  spec.threads = args.threads;
  if (!args.grad_denoiser.empty()) {
    spec.gradient_denoiser = parse_denoiser(args.grad_denoiser, DenoiserDomain::gradient);
  }
  if (!args.image_denoiser.empty()) {
    spec.image_denoiser = parse_denoiser(args.image_denoiser, DenoiserDomain::image);
  }
  for (Algorithm a : spec.algorithms) {
    RunConfig cfg = RunConfig::defaults(a);
    cfg.iterations = args.iters;
    cfg.sigma_floor = args.sigma_floor;
    spec.configs[a] = cfg;
  }

  const BenchReport report = run_bench(spec);
  write_report(args.out, report);
  std::cout << report_table(report);
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (report.any_cell_failed()) {
    std::cerr << "apnp bench: at least one cell has no successful run\n";
    return 1;
  }
  return 0;
}

int cmd_make_kernels(const KernelArgs& args) {
  std::vector<KernelParams> params;
  if (args.manifest.empty()) {
    params = default_kernel_set();
  } else {
    for (const auto& entry : read_kernel_manifest(args.manifest)) params.push_back(entry.second);
  }
  for (const fs::path& p : write_kernel_set(args.out, params)) std::cout << p.string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  const WeightArchive a = load_weights(path);
  std::cout << "domain " << to_string(a.domain) << "\n"
            << "channels " << a.in_channels << " -> " << a.out_channels << "\n"
            << "prediction " << to_string(a.prediction) << "\n"
            << "sigma_range " << a.metadata.sigma_min << " " << a.metadata.sigma_max << "\n"
            << "normalization " << a.metadata.normalization << "\n"
            << "size_multiple " << a.size_multiple() << "\n";
  std::size_t params = 0;
  for (const auto& [name, values] : a.tensors) params += values.size();
  std::cout << "parameters " << params << "\n";
  for (const LayerDesc& l : a.layers) {
    std::cout << "  " << l.name << " " << to_string(l.type);
    if (l.in_channels) {
      std::cout << " " << l.in_channels << "->" << l.out_channels << " k" << l.kernel << " s"
                << l.stride << " p" << l.padding;
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plug-and-play image restoration with analysis priors"};
  app.require_subcommand(1);

  RestoreArgs r;
  CLI::App* restore = app.add_subcommand("restore", "Restore a degraded image");
  restore->add_option("input", r.input, "Degraded image (.png/.pgm)")->required();
  restore->add_option("--out", r.out, "Restored image")->required();
  restore->add_option("--algo", r.algo, "apnp-hqs, apnp-admm, pnp-hqs or pnp-admm");
  restore->add_option("--denoiser", r.denoiser, "identity, soft:W or neural:PATH");
  restore->add_option("--kernel", r.kernel, "Kernel file or builtin:N / builtin:identity");
  restore->add_option("--sf", r.sf, "Downsampling factor")->check(CLI::Range(1, 4));
  restore->add_option("--noise", r.noise, "Measurement noise level, 8-bit units");
  restore->add_option("--lambda", r.lambda, "Regularization weight");
  restore->add_option("--iters", r.iters, "Iterations")->check(CLI::PositiveNumber);
  restore->add_option("--schedule-scale", r.schedule_scale, "Schedule multiplier");
  restore->add_option("--sigma-floor", r.sigma_floor, "Lower bound on the noise level");
  restore->add_option("--seed", r.seed, "Seed");
  restore->add_option("--gt", r.gt, "Ground truth for PSNR/SSIM");
  restore->add_option("--trace", r.trace, "Trace JSON (default OUT.trace.json)");

  DegradeArgs d;
  CLI::App* degrade = app.add_subcommand("degrade", "Blur, decimate and add noise");
  degrade->add_option("input", d.input, "Clean image")->required();
  degrade->add_option("--out", d.out, "Degraded image")->required();
  degrade->add_option("--kernel", d.kernel, "Kernel file or builtin:N / builtin:identity");
  degrade->add_option("--sf", d.sf, "Downsampling factor")->check(CLI::Range(1, 4));
  degrade->add_option("--noise", d.noise, "Noise level, 8-bit units");
  degrade->add_option("--seed", d.seed, "Noise seed");

  BenchArgs b;
  CLI::App* bench = app.add_subcommand("bench", "Run the benchmark grid");
  bench->add_option("--dataset", b.dataset, "Directory of test images")->required();
  bench->add_option("--out", b.out, "Output directory")->required();
  bench->add_option("--kernels", b.kernels, "Kernel manifest (default: built-in set)");
  bench->add_option("--sf", b.sf, "Scale factors")->delimiter(',');
  bench->add_option("--noise", b.noise, "Noise levels, 8-bit units")->delimiter(',');
  bench->add_option("--algos", b.algos, "Algorithms")->delimiter(',');
  bench->add_option("--grad-denoiser", b.grad_denoiser, "Gradient-domain denoiser spec");
  bench->add_option("--image-denoiser", b.image_denoiser, "Image-domain denoiser spec");
  bench->add_option("--iters", b.iters, "Iterations")->check(CLI::PositiveNumber);
  bench->add_option("--sigma-floor", b.sigma_floor, "Lower bound on the noise level");
  bench->add_option("--seed", b.seed, "Seed");
  bench->add_option("--threads", b.threads, "Workers (0: APNP_THREADS or hardware)");

  KernelArgs k;
  CLI::App* kernels = app.add_subcommand("make-kernels", "Write the blur kernel set");
  kernels->add_option("--out", k.out, "Output directory")->required();
  kernels->add_option("--manifest", k.manifest, "Regenerate from an existing manifest");

  std::string archive;
  CLI::App* inspect = app.add_subcommand("inspect-weights", "Describe a weight archive");
  inspect->add_option("archive", archive, "Archive path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }

  try {
    if (*restore) return cmd_restore(r);
    if (*degrade) return cmd_degrade(d);
    if (*bench) return cmd_bench(b);
    if (*kernels) return cmd_make_kernels(k);
    if (*inspect) return cmd_inspect(archive);
  } catch (const std::exception& e) {
    std::cerr << "apnp: " << e.what() << "\n";
    return 1;
  }
  return kUsageExit;
}
