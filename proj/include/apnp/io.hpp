#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "apnp/denoise.hpp"
#include "apnp/imgcore.hpp"

namespace apnp {

/// Reads an 8-bit grayscale PNG or PGM (P2/P5) and divides by 255.
/// Colour, alpha, palette and 16-bit inputs raise UnsupportedFormatError.
Image read_image(const std::filesystem::path& path);

/// Writes round(255 v) with halves away from zero, clamped to [0, 255].
/// The format follows the extension (.png or .pgm).
void write_image(const std::filesystem::path& path, const Image& img);

/// 8-bit code for one intensity under the write rule above.
unsigned char quantize(double v);

/// Parameters of one Gaussian blur kernel in a kernel set.
struct KernelParams {
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double theta = 0.0;
  int size = 25;

  BlurKernel make() const;
};

/// Four isotropic (0.7, 1.2, 1.6, 2.0) and four anisotropic
/// ((4,1,0), (4,1,pi/4), (3,1.5,pi/2), (5,2,3pi/4)) kernels, all 25x25.
std::vector<KernelParams> default_kernel_set();

/// Kernel text file: first line is the side length, then one row per line.
BlurKernel read_kernel(const std::filesystem::path& path);
void write_kernel(const std::filesystem::path& path, const BlurKernel& k);

/// "builtin:N" (index into the default set), "builtin:identity", or a path.
BlurKernel resolve_kernel(const std::string& spec);

/// Manifest: CSV with header `file,sigma_x,sigma_y,theta,size`.
void write_kernel_manifest(const std::filesystem::path& path,
                           const std::vector<std::string>& files,
                           const std::vector<KernelParams>& params);
std::vector<std::pair<std::string, KernelParams>> read_kernel_manifest(
    const std::filesystem::path& path);

/// Writes kernel_NN.txt for every entry plus manifest.csv into dir and
/// returns the kernel file paths.
std::vector<std::filesystem::path> write_kernel_set(const std::filesystem::path& dir,
                                                    const std::vector<KernelParams>& params);

/// "identity", "soft:W" or "neural:PATH". A neural archive whose domain
/// differs from `domain` raises DomainError.
Denoiser parse_denoiser(const std::string& spec, DenoiserDomain domain);

}  // namespace apnp
