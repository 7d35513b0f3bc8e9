#include "apnp/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "apnp/metrics.hpp"

namespace apnp {

namespace fs = std::filesystem;

namespace {

int column_rank(Algorithm a) {
  switch (a) {
    case Algorithm::pnp_hqs: return 0;
    case Algorithm::apnp_hqs: return 1;
    case Algorithm::pnp_admm: return 2;
    case Algorithm::apnp_admm: return 3;
  }
  return 4;
}

std::string column_label(Algorithm a) {
  switch (a) {
    case Algorithm::pnp_hqs: return "DPIR";
    case Algorithm::apnp_hqs: return "APnP-HQS";
    case Algorithm::pnp_admm: return "PnP-ADMM";
    case Algorithm::apnp_admm: return "APnP-ADMM";
  }
  return "?";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("APNP_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool row_less(const BenchRow& a, const BenchRow& b) {
  return std::tie(a.image_index, a.scale, a.noise_8bit, a.kernel_index) <
             std::tie(b.image_index, b.scale, b.noise_8bit, b.kernel_index) ||
         (std::tie(a.image_index, a.scale, a.noise_8bit, a.kernel_index) ==
              std::tie(b.image_index, b.scale, b.noise_8bit, b.kernel_index) &&
          column_rank(a.algorithm) < column_rank(b.algorithm));
}

bool cell_less(const BenchCell& a, const BenchCell& b) {
  return std::make_tuple(a.scale, a.noise_8bit, column_rank(a.algorithm)) <
         std::make_tuple(b.scale, b.noise_8bit, column_rank(b.algorithm));
}

// Means over the successful rows of each cell, accumulated in row order.
std::vector<BenchCell> summarize(const std::vector<BenchRow>& rows) {
  std::map<std::tuple<int, double, int>, BenchCell> cells;
  for (const BenchRow& r : rows) {
    BenchCell& c = cells[{r.scale, r.noise_8bit, column_rank(r.algorithm)}];
    c.scale = r.scale;
    c.noise_8bit = r.noise_8bit;
    c.algorithm = r.algorithm;
    if (r.ok) {
      c.mean_psnr += r.psnr;
      c.mean_ssim += r.ssim;
      ++c.runs;
    } else {
      ++c.failures;
    }
  }
  std::vector<BenchCell> out;
  for (auto& [key, c] : cells) {
    if (c.runs > 0) {
      c.mean_psnr /= c.runs;
      c.mean_ssim /= c.runs;
    }
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), cell_less);
  return out;
}

struct ImageOutcome {
  std::vector<BenchRow> rows;
  std::map<std::tuple<int, double, int>, double> seconds;
  WarningLog warnings;
};

ImageOutcome run_image(const BenchSpec& spec, const fs::path& path, int image_index) {
  ImageOutcome outcome;
  const std::string name = path.filename().string();
  std::optional<Image> source;
  std::string load_error;
  try {
    source = read_image(path);
  } catch (const Error& e) {
    load_error = e.what();
    outcome.warnings.push_back("image " + name + " skipped: " + load_error);
  }

  for (int scale : spec.scales) {
    std::optional<Image> truth;
    if (source) {
      truth = center_crop_to_multiple(*source, scale);
      if (truth->height() != source->height() || truth->width() != source->width()) {
        outcome.warnings.push_back("image " + name + " center-cropped to " +
                                   std::to_string(truth->height()) + "x" +
                                   std::to_string(truth->width()) + " for scale " +
                                   std::to_string(scale));
      }
    }
    for (std::size_t ni = 0; ni < spec.noise_levels_8bit.size(); ++ni) {
      const double noise = spec.noise_levels_8bit[ni];
      for (std::size_t ki = 0; ki < spec.kernels.size(); ++ki) {
        std::optional<Image> y;
        DegradationSpec degradation{spec.kernels[ki].kernel, scale, noise / 255.0};
        std::string measure_error = load_error;
        if (truth) {
          try {
            y = forward_apply(degradation, *truth,
                              bench_noise_seed(spec.seed, image_index, static_cast<int>(ki), scale,
                                               static_cast<int>(ni)));
          } catch (const Error& e) {
            measure_error = e.what();
          }
        }
        for (Algorithm algorithm : spec.algorithms) {
          BenchRow row;
          row.image = name;
          row.image_index = image_index;
          row.scale = scale;
          row.noise_8bit = noise;
          row.kernel_index = static_cast<int>(ki);
          row.algorithm = algorithm;
          row.crop = scale;
          if (truth) {
            row.height = truth->height();
            row.width = truth->width();
          }
          const auto start = std::chrono::steady_clock::now();
          if (!y) {
            row.ok = false;
            row.error = measure_error;
          } else {
            try {
              const bool gradient = denoiser_domain(algorithm) == DenoiserDomain::gradient;
              const std::optional<Denoiser>& denoiser =
                  gradient ? spec.gradient_denoiser : spec.image_denoiser;
              if (!denoiser) {
                throw ParameterError(std::string("no ") + (gradient ? "gradient" : "image") +
                                     "-domain denoiser assigned");
              }
              RunResult result = run(spec.config_for(algorithm), degradation, *y, *denoiser);
              const MetricReport m = evaluate(result.image, *truth, row.crop);
              row.psnr = m.psnr;
              row.ssim = m.ssim;
              for (const std::string& w : result.trace.warnings) {
                outcome.warnings.push_back(name + "/" + to_string(algorithm) + ": " + w);
              }
            } catch (const Error& e) {
              row.ok = false;
              row.error = e.what();
            }
          }
          const double elapsed =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          outcome.seconds[{scale, noise, column_rank(algorithm)}] += elapsed;
          if (!row.ok) {
            outcome.warnings.push_back("run failed: " + name + " sf=" + std::to_string(scale) +
                                       " kernel=" + std::to_string(ki) + " " +
                                       to_string(algorithm) + ": " + row.error);
          }
          outcome.rows.push_back(std::move(row));
        }
      }
    }
  }
  // Deduplicate repeated notices (one per kernel/noise pair otherwise).
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (std::string& w : outcome.warnings) {
    if (seen.insert(w).second) unique.push_back(std::move(w));
  }
  outcome.warnings = std::move(unique);
  return outcome;
}

std::string clean(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<BenchKernel> BenchSpec::default_kernels() {
  std::vector<BenchKernel> out;
  const auto params = default_kernel_set();
  for (std::size_t n = 0; n < params.size(); ++n) {
    out.push_back({"builtin:" + std::to_string(n), params[n].make(), params[n]});
  }
  return out;
}

RunConfig BenchSpec::config_for(Algorithm a) const {
  auto it = configs.find(a);
  return it != configs.end() ? it->second : RunConfig::defaults(a);
}

const BenchCell* BenchReport::cell(int scale, double noise_8bit, Algorithm a) const {
  for (const BenchCell& c : cells) {
    if (c.scale == scale && c.noise_8bit == noise_8bit && c.algorithm == a) return &c;
  }
  return nullptr;
}

bool BenchReport::any_cell_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const BenchCell& c) { return c.runs == 0; });
}

std::uint64_t bench_noise_seed(std::uint64_t seed, int image_index, int kernel_index, int scale,
                               int noise_index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(image_index));
  h = splitmix64(h ^ static_cast<std::uint64_t>(kernel_index));
  h = splitmix64(h ^ static_cast<std::uint64_t>(scale));
  return splitmix64(h ^ static_cast<std::uint64_t>(noise_index));
}

Image center_crop_to_multiple(const Image& img, int scale) {
  const int h = img.height() / scale * scale;
  const int w = img.width() / scale * scale;
  if (h == img.height() && w == img.width()) return img;
  if (h == 0 || w == 0) throw SizeError("image smaller than the scale factor");
  const int top = (img.height() - h) / 2;
  const int left = (img.width() - w) / 2;
  Image out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) out(i, j) = img(top + i, left + j);
  }
  return out;
}

std::vector<fs::path> list_dataset(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png" || ext == ".pgm") files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list dataset directory " + dir.string());
  if (files.empty()) throw IoError("dataset directory " + dir.string() + " has no PNG/PGM images");
  std::sort(files.begin(), files.end());
  return files;
}

BenchReport run_bench(const BenchSpec& spec) {
  if (spec.kernels.empty()) throw ParameterError("benchmark needs at least one kernel");
  if (spec.scales.empty() || spec.noise_levels_8bit.empty() || spec.algorithms.empty()) {
    throw ParameterError("benchmark scale, noise and algorithm lists must be non-empty");
  }
  for (int s : spec.scales) DegradationSpec{BlurKernel::identity(), s, 0.0}.validate();
  for (double n : spec.noise_levels_8bit) {
    if (!(n >= 0.0)) throw ParameterError("noise levels must be non-negative");
  }
  const std::vector<fs::path> files = list_dataset(spec.dataset_dir);

  std::vector<ImageOutcome> outcomes(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t n = next++; n < files.size(); n = next++) {
      outcomes[n] = run_image(spec, files[n], static_cast<int>(n));
    }
  };
  const int threads = std::min<int>(resolve_threads(spec.threads), static_cast<int>(files.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  BenchReport report;
  std::map<std::tuple<int, double, int>, double> seconds;
  for (ImageOutcome& o : outcomes) {
    report.rows.insert(report.rows.end(), o.rows.begin(), o.rows.end());
    report.warnings.insert(report.warnings.end(), o.warnings.begin(), o.warnings.end());
    for (const auto& [key, s] : o.seconds) seconds[key] += s;
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), row_less);
  report.cells = summarize(report.rows);
  for (BenchCell& c : report.cells) {
    c.seconds = seconds[{c.scale, c.noise_8bit, column_rank(c.algorithm)}];
  }

  auto& cfg = report.config;
  cfg.emplace_back("dataset", spec.dataset_dir.filename().string());
  cfg.emplace_back("images", std::to_string(files.size()));
  cfg.emplace_back("seed", std::to_string(spec.seed));
  std::string scales, noises, algos;
  for (int s : spec.scales) scales += (scales.empty() ? "" : ";") + std::to_string(s);
  for (double n : spec.noise_levels_8bit) noises += (noises.empty() ? "" : ";") + fmt_short(n);
  for (Algorithm a : spec.algorithms) algos += (algos.empty() ? "" : ";") + to_string(a);
  cfg.emplace_back("scales", scales);
  cfg.emplace_back("noise_levels_8bit", noises);
  cfg.emplace_back("algorithms", algos);
  cfg.emplace_back("crop", "scale pixels per side");
  cfg.emplace_back("ssim", "gaussian window 11x11 sigma 1.5, K1=0.01, K2=0.03, range 1");
  cfg.emplace_back("boundary", "periodic");
  cfg.emplace_back("decimation", "keep index 0 mod s");
  cfg.emplace_back("init", "x0=y (sf=1), bicubic Keys a=-0.5 (sf>1)");
  cfg.emplace_back("dataset_crop", "center crop to multiple of sf");
  if (spec.gradient_denoiser) cfg.emplace_back("gradient_denoiser", spec.gradient_denoiser->describe());
  if (spec.image_denoiser) cfg.emplace_back("image_denoiser", spec.image_denoiser->describe());
  for (Algorithm a : spec.algorithms) {
    const RunConfig rc = spec.config_for(a);
    const std::string p = to_string(a) + ".";
    cfg.emplace_back(p + "lambda", fmt(rc.lambda));
    cfg.emplace_back(p + "iterations", std::to_string(rc.iterations));
    cfg.emplace_back(p + "schedule_scale", fmt(rc.schedule_scale));
    cfg.emplace_back(p + "sigma_max", fmt(rc.sigma_max));
    cfg.emplace_back(p + "sigma_floor", fmt(rc.sigma_floor));
    if (rc.fixed_prior_sigma) cfg.emplace_back(p + "fixed_prior_sigma", fmt(*rc.fixed_prior_sigma));
  }
  for (std::size_t k = 0; k < spec.kernels.size(); ++k) {
    const BenchKernel& bk = spec.kernels[k];
    std::string desc = bk.label + " size=" + std::to_string(bk.kernel.size());
    if (bk.params) {
      desc += " sigma_x=" + fmt_short(bk.params->sigma_x) + " sigma_y=" +
              fmt_short(bk.params->sigma_y) + " theta=" + fmt_short(bk.params->theta);
    }
    cfg.emplace_back("kernel." + std::to_string(k), clean(desc));
  }
  return report;
}

std::string report_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "# apnp benchmark report\n";
  for (const auto& [key, value] : report.config) out << "# " << key << "=" << clean(value) << "\n";
  out << "[runs]\n";
  out << "image,image_index,sf,noise,kernel,algorithm,status,psnr,ssim,crop,height,width,error\n";
  for (const BenchRow& r : report.rows) {
    out << clean(r.image) << "," << r.image_index << "," << r.scale << "," << fmt(r.noise_8bit)
        << "," << r.kernel_index << "," << to_string(r.algorithm) << ","
        << (r.ok ? "ok" : "failed") << "," << fmt(r.psnr) << "," << fmt(r.ssim) << "," << r.crop
        << "," << r.height << "," << r.width << "," << clean(r.error) << "\n";
  }
  out << "[cells]\n";
  out << "sf,noise,algorithm,mean_psnr,mean_ssim,runs,failures\n";
  for (const BenchCell& c : report.cells) {
    out << c.scale << "," << fmt(c.noise_8bit) << "," << to_string(c.algorithm) << ","
        << fmt(c.mean_psnr) << "," << fmt(c.mean_ssim) << "," << c.runs << "," << c.failures
        << "\n";
  }
  return out.str();
}

std::string report_table(const BenchReport& report) {
  std::vector<Algorithm> columns;
  std::vector<std::pair<int, double>> groups;
  for (const BenchCell& c : report.cells) {
    if (std::find(columns.begin(), columns.end(), c.algorithm) == columns.end()) {
      columns.push_back(c.algorithm);
    }
    if (std::find(groups.begin(), groups.end(), std::make_pair(c.scale, c.noise_8bit)) ==
        groups.end()) {
      groups.emplace_back(c.scale, c.noise_8bit);
    }
  }
  std::sort(columns.begin(), columns.end(),
            [](Algorithm a, Algorithm b) { return column_rank(a) < column_rank(b); });

  std::ostringstream out;
  auto block = [&](const char* title, bool use_psnr) {
    out << title << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-4s %-6s", "SF", "Noise");
    out << buf;
    for (Algorithm a : columns) {
      std::snprintf(buf, sizeof buf, " %10s", column_label(a).c_str());
      out << buf;
    }
    out << "\n";
    int last_scale = -1;
    for (const auto& [scale, noise] : groups) {
      std::snprintf(buf, sizeof buf, "%-4s %-6s",
                    scale == last_scale ? "" : std::to_string(scale).c_str(),
                    fmt_short(noise).c_str());
      out << buf;
      last_scale = scale;
      for (Algorithm a : columns) {
        const BenchCell* c = report.cell(scale, noise, a);
        if (c == nullptr || c->runs == 0) {
          std::snprintf(buf, sizeof buf, " %10s", "-");
        } else if (use_psnr) {
          std::snprintf(buf, sizeof buf, " %10.2f", c->mean_psnr);
        } else {
          std::snprintf(buf, sizeof buf, " %10.4f", c->mean_ssim);
        }
        out << buf;
      }
      out << "\n";
    }
    out << "\n";
  };
  block("SSIM", false);
  block("PSNR", true);

  out << "Wall clock per cell (s)\n";
  for (const BenchCell& c : report.cells) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  sf=%d noise=%s %-10s %8.2f\n", c.scale,
                  fmt_short(c.noise_8bit).c_str(), column_label(c.algorithm).c_str(), c.seconds);
    out << buf;
  }
  out << "\nSettings\n";
  for (const auto& [key, value] : report.config) out << "  " << key << " = " << value << "\n";
  if (!report.warnings.empty()) {
    out << "\nWarnings\n";
    for (const std::string& w : report.warnings) out << "  " << w << "\n";
  }
  return out.str();
}

std::string report_timing_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "sf,noise,algorithm,seconds\n";
  for (const BenchCell& c : report.cells) {
    out << c.scale << "," << fmt(c.noise_8bit) << "," << to_string(c.algorithm) << ","
        << fmt(c.seconds) << "\n";
  }
  return out.str();
}

void write_report(const fs::path& dir, const BenchReport& report) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw IoError("failed writing " + (dir / name).string());
  };
  write("report.csv", report_csv(report));
  write("table.txt", report_table(report));
  write("timing.csv", report_timing_csv(report));
}

BenchReport parse_report(const std::string& text) {
  BenchReport report;
  std::istringstream in(text);
  std::string line;
  enum class Section { header, runs, cells } section = Section::header;
  bool column_line = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line == "[runs]") {
        section = Section::runs;
        column_line = true;
        continue;
      }
      if (line == "[cells]") {
        section = Section::cells;
        column_line = true;
        continue;
      }
      if (column_line) {
        column_line = false;
        continue;
      }
      if (section == Section::header) {
        if (line.rfind("# ", 0) == 0) {
          const auto eq = line.find('=');
          if (eq != std::string::npos) {
            report.config.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
          }
        }
        continue;
      }
      const std::vector<std::string> f = split_csv(line);
      if (section == Section::runs) {
        if (f.size() != 13) throw Error("malformed run row: " + line);
        BenchRow r;
        r.image = f[0];
        r.image_index = std::stoi(f[1]);
        r.scale = std::stoi(f[2]);
        r.noise_8bit = std::stod(f[3]);
        r.kernel_index = std::stoi(f[4]);
        r.algorithm = parse_algorithm(f[5]);
        r.ok = f[6] == "ok";
        r.psnr = std::stod(f[7]);
        r.ssim = std::stod(f[8]);
        r.crop = std::stoi(f[9]);
        r.height = std::stoi(f[10]);
        r.width = std::stoi(f[11]);
        r.error = f[12];
        report.rows.push_back(std::move(r));
      } else {
        if (f.size() != 7) throw Error("malformed cell row: " + line);
        BenchCell c;
        c.scale = std::stoi(f[0]);
        c.noise_8bit = std::stod(f[1]);
        c.algorithm = parse_algorithm(f[2]);
        c.mean_psnr = std::stod(f[3]);
        c.mean_ssim = std::stod(f[4]);
        c.runs = std::stoi(f[5]);
        c.failures = std::stoi(f[6]);
        report.cells.push_back(c);
      }
    }
  } catch (const std::invalid_argument&) {
    throw Error("malformed number in benchmark report: " + line);
  } catch (const std::out_of_range&) {
    throw Error("out-of-range number in benchmark report: " + line);
  }

  const std::vector<BenchCell> recomputed = summarize(report.rows);
  if (recomputed.size() != report.cells.size()) {
    throw Error("benchmark report lists " + std::to_string(report.cells.size()) +
                " cells but its rows define " + std::to_string(recomputed.size()));
  }
  for (std::size_t n = 0; n < recomputed.size(); ++n) {
    const BenchCell& a = recomputed[n];
    const BenchCell& b = report.cells[n];
    if (a.scale != b.scale || a.noise_8bit != b.noise_8bit || a.algorithm != b.algorithm ||
        a.runs != b.runs || a.failures != b.failures ||
        std::abs(a.mean_psnr - b.mean_psnr) > 1e-12 ||
        std::abs(a.mean_ssim - b.mean_ssim) > 1e-12) {
      throw Error("cell sf=" + std::to_string(b.scale) + " noise=" + fmt_short(b.noise_8bit) +
                  " " + to_string(b.algorithm) + " does not match its per-run rows");
    }
  }
  return report;
}

BenchReport load_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_report(buffer.str());
}

}  // namespace apnp
