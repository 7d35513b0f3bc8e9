#include "apnp/io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>

#include "apnp/errors.hpp"
#include "apnp/operators.hpp"

namespace apnp {

namespace fs = std::filesystem;

unsigned char quantize(double v) {
  const double scaled = std::round(v * 255.0);  // halves away from zero
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw UnsupportedFormatError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::string error;
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    error = "only grayscale PNG images are supported (" + path.string() + " has colour type " +
            std::to_string(color) + ")";
  } else if (depth != 8) {
    error = "only 8-bit PNG images are supported (" + path.string() + " has bit depth " +
            std::to_string(depth) + ")";
  }
  if (!error.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedFormatError(error);
  }
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  std::vector<png_byte> pixels(static_cast<std::size_t>(width) * height);
  std::vector<png_bytep> rows(height);
  for (int i = 0; i < height; ++i) rows[i] = pixels.data() + static_cast<std::size_t>(i) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(height, width);
  auto v = img.values();
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = pixels[n] / 255.0;
  return img;
}

void write_png(const fs::path& path, const Image& img) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> pixels(img.size());
  for (std::size_t n = 0; n < pixels.size(); ++n) pixels[n] = quantize(img.values()[n]);
  std::vector<png_bytep> rows(img.height());
  for (int i = 0; i < img.height(); ++i) {
    rows[i] = pixels.data() + static_cast<std::size_t>(i) * img.width();
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
    } else {
      token.push_back(c);
    }
  }
  return token;
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P2") {
    throw UnsupportedFormatError(path.string() + ": only P2/P5 grayscale PGM is supported");
  }
  int width = 0;
  int height = 0;
  int maxval = 0;
  try {
    width = std::stoi(pnm_token(in));
    height = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw UnsupportedFormatError(path.string() + ": malformed PGM header");
  }
  if (maxval != 255) {
    throw UnsupportedFormatError(path.string() + ": only 8-bit PGM (maxval 255) is supported");
  }
  Image img(height, width);
  auto v = img.values();
  if (magic == "P5") {
    std::vector<unsigned char> raw(v.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw IoError(path.string() + ": truncated PGM pixel data");
    }
    for (std::size_t n = 0; n < v.size(); ++n) v[n] = raw[n] / 255.0;
  } else {
    for (double& p : v) {
      int code;
      if (!(in >> code) || code < 0 || code > 255) {
        throw IoError(path.string() + ": bad ASCII PGM pixel");
      }
      p = code / 255.0;
    }
  }
  return img;
}

void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (std::size_t n = 0; n < raw.size(); ++n) raw[n] = quantize(img.values()[n]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Image read_image(const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".pnm") return read_pgm(path);
  throw UnsupportedFormatError("unsupported image extension '" + ext + "' (" + path.string() + ")");
}

void write_image(const fs::path& path, const Image& img) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".pgm" || ext == ".pnm") return write_pgm(path, img);
  throw UnsupportedFormatError("unsupported image extension '" + ext + "' (" + path.string() + ")");
}

BlurKernel KernelParams::make() const { return gaussian_kernel(sigma_x, sigma_y, theta, size); }

std::vector<KernelParams> default_kernel_set() {
  constexpr double pi = std::numbers::pi;
  return {
      {0.7, 0.7, 0.0, 25},      {1.2, 1.2, 0.0, 25},      {1.6, 1.6, 0.0, 25},
      {2.0, 2.0, 0.0, 25},      {4.0, 1.0, 0.0, 25},      {4.0, 1.0, pi / 4, 25},
      {3.0, 1.5, pi / 2, 25},   {5.0, 2.0, 3 * pi / 4, 25},
  };
}

BlurKernel read_kernel(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel file " + path.string());
  int size = 0;
  if (!(in >> size) || size < 1) throw ParameterError(path.string() + ": bad kernel size header");
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  for (double& t : taps) {
    if (!(in >> t)) throw ParameterError(path.string() + ": kernel file has too few taps");
  }
  double extra;
  if (in >> extra) throw ParameterError(path.string() + ": kernel file has too many taps");
  return BlurKernel(size, std::move(taps));
}

void write_kernel(const fs::path& path, const BlurKernel& k) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write kernel file " + path.string());
  out << k.size() << "\n";
  for (int i = 0; i < k.size(); ++i) {
    for (int j = 0; j < k.size(); ++j) out << (j ? " " : "") << format_double(k(i, j));
    out << "\n";
  }
  if (!out) throw IoError("failed writing kernel file " + path.string());
}

BlurKernel resolve_kernel(const std::string& spec) {
  const std::string prefix = "builtin:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string id = spec.substr(prefix.size());
    if (id == "identity") return BlurKernel::identity();
    const auto set = default_kernel_set();
    std::size_t pos = 0;
    int index = -1;
    try {
      index = std::stoi(id, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != id.size() || index < 0 || index >= static_cast<int>(set.size())) {
      throw ParameterError("unknown builtin kernel '" + id + "' (use 0-" +
                           std::to_string(set.size() - 1) + " or identity)");
    }
    return set[index].make();
  }
  return read_kernel(spec);
}

void write_kernel_manifest(const fs::path& path, const std::vector<std::string>& files,
                           const std::vector<KernelParams>& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "file,sigma_x,sigma_y,theta,size\n";
  for (std::size_t n = 0; n < params.size(); ++n) {
    const KernelParams& p = params[n];
    out << files[n] << "," << format_double(p.sigma_x) << "," << format_double(p.sigma_y) << ","
        << format_double(p.theta) << "," << p.size << "\n";
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<std::pair<std::string, KernelParams>> read_kernel_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "file,sigma_x,sigma_y,theta,size") {
    throw ParameterError(path.string() + ": unexpected manifest header");
  }
  std::vector<std::pair<std::string, KernelParams>> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string file, sx, sy, th, sz;
    if (!std::getline(row, file, ',') || !std::getline(row, sx, ',') ||
        !std::getline(row, sy, ',') || !std::getline(row, th, ',') || !std::getline(row, sz)) {
      throw ParameterError(path.string() + ": malformed manifest row '" + line + "'");
    }
    KernelParams p{std::stod(sx), std::stod(sy), std::stod(th), std::stoi(sz)};
    entries.emplace_back(file, p);
  }
  return entries;
}

std::vector<fs::path> write_kernel_set(const fs::path& dir, const std::vector<KernelParams>& params) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  std::vector<fs::path> written;
  std::vector<std::string> names;
  for (std::size_t n = 0; n < params.size(); ++n) {
    char name[32];
    std::snprintf(name, sizeof name, "kernel_%02zu.txt", n);
    write_kernel(dir / name, params[n].make());
    written.push_back(dir / name);
    names.emplace_back(name);
  }
  write_kernel_manifest(dir / "manifest.csv", names, params);
  return written;
}

Denoiser parse_denoiser(const std::string& spec, DenoiserDomain domain) {
  if (spec == "identity") return Denoiser::identity(domain);
  if (spec.rfind("soft:", 0) == 0) {
    double weight = 0.0;
    try {
      std::size_t pos = 0;
      weight = std::stod(spec.substr(5), &pos);
      if (pos != spec.size() - 5) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ParameterError("bad soft-threshold weight in '" + spec + "'");
    }
    return Denoiser::soft_threshold(weight, domain);
  }
  if (spec.rfind("neural:", 0) == 0) {
    Denoiser d = Denoiser::neural(fs::path(spec.substr(7)));
    if (d.domain() != domain) {
      throw DomainError("archive " + spec.substr(7) + " holds a " + to_string(d.domain()) +
                        "-domain denoiser, " + to_string(domain) + " required");
    }
    return d;
  }
  throw ParameterError("unknown denoiser '" + spec + "' (identity, soft:W or neural:PATH)");
}

}  // namespace apnp
