#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apnp/denoise.hpp"
#include "apnp/io.hpp"
#include "apnp/pnp.hpp"

namespace apnp {

struct BenchKernel {
  std::string label;
  BlurKernel kernel;
  std::optional<KernelParams> params;  ///< known for generated kernels
};

/// Everything that defines a benchmark run. Every (scale, noise, kernel,
/// algorithm) combination is run on every image.
struct BenchSpec {
  std::filesystem::path dataset_dir;
  std::vector<BenchKernel> kernels;
  std::vector<int> scales{1, 2, 3};
  std::vector<double> noise_levels_8bit{0.0, 7.65};
  std::vector<Algorithm> algorithms{Algorithm::pnp_hqs, Algorithm::apnp_hqs, Algorithm::pnp_admm,
                                    Algorithm::apnp_admm};
  std::optional<Denoiser> gradient_denoiser;
  std::optional<Denoiser> image_denoiser;
  /// Per-algorithm settings; missing entries use RunConfig::defaults.
  std::map<Algorithm, RunConfig> configs;
  std::uint64_t seed = 0;
  /// Worker count; 0 reads APNP_THREADS, falling back to the hardware.
  int threads = 0;

  static std::vector<BenchKernel> default_kernels();
  RunConfig config_for(Algorithm a) const;
};

struct BenchRow {
  std::string image;
  int image_index = 0;
  int scale = 1;
  double noise_8bit = 0.0;
  int kernel_index = 0;
  Algorithm algorithm = Algorithm::apnp_hqs;
  bool ok = true;
  double psnr = 0.0;
  double ssim = 0.0;
  int crop = 0;
  int height = 0;  ///< evaluated (pre-crop) high-resolution size
  int width = 0;
  std::string error;
};

struct BenchCell {
  int scale = 1;
  double noise_8bit = 0.0;
  Algorithm algorithm = Algorithm::apnp_hqs;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int runs = 0;
  int failures = 0;
  double seconds = 0.0;  ///< summed wall clock; kept out of the CSV report
};

struct BenchReport {
  std::vector<std::pair<std::string, std::string>> config;  ///< echoed settings, in order
  std::vector<BenchRow> rows;    ///< sorted by (image, scale, noise, kernel, algorithm)
  std::vector<BenchCell> cells;  ///< sorted by (scale, noise, algorithm column)
  WarningLog warnings;

  const BenchCell* cell(int scale, double noise_8bit, Algorithm a) const;
  /// true when at least one cell has no successful run.
  bool any_cell_failed() const;
};

/// Seed of the measurement noise for one (image, kernel, scale, noise)
/// combination. Independent of the algorithm list.
std::uint64_t bench_noise_seed(std::uint64_t seed, int image_index, int kernel_index, int scale,
                               int noise_index);

/// Crops the centre of img to the largest multiple of scale in each axis.
Image center_crop_to_multiple(const Image& img, int scale);

/// Sorted list of .png/.pgm files in dir. Throws IoError when none exist.
std::vector<std::filesystem::path> list_dataset(const std::filesystem::path& dir);

BenchReport run_bench(const BenchSpec& spec);

/// Machine-readable form: `# key=value` header block, then a per-run
/// section and a per-cell section, comma separated, full precision.
std::string report_csv(const BenchReport& report);
/// Aligned SSIM and PSNR tables, rows SF x noise, columns algorithms.
std::string report_table(const BenchReport& report);
std::string report_timing_csv(const BenchReport& report);

/// Writes report.csv, table.txt and timing.csv into dir.
void write_report(const std::filesystem::path& dir, const BenchReport& report);

/// Parses report_csv output and recomputes every cell mean from the rows;
/// throws Error when any mean differs by more than 1e-12.
BenchReport load_report(const std::filesystem::path& path);
BenchReport parse_report(const std::string& text);

}  // namespace apnp
