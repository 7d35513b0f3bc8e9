#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "apnp/errors.hpp"

namespace apnp {

/// Raised by load_weights / parse_weights. Subclasses distinguish causes.
class LoadError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public LoadError {
 public:
  using LoadError::LoadError;
};
class TruncatedArchiveError : public LoadError {
 public:
  using LoadError::LoadError;
};
class ShapeMismatchError : public LoadError {
 public:
  using LoadError::LoadError;
};
class ChecksumError : public LoadError {
 public:
  using LoadError::LoadError;
};
class UnsupportedArchiveError : public LoadError {
 public:
  using LoadError::LoadError;
};

enum class DenoiserDomain { gradient, image };

/// Whether the network output is the clean signal or the noise to subtract.
enum class Prediction { direct, residual };

enum class LayerType { conv2d, conv_transpose2d, relu, add };

std::string to_string(DenoiserDomain d);
std::string to_string(Prediction p);
std::string to_string(LayerType t);

struct LayerDesc {
  std::string name;
  LayerType type = LayerType::relu;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  std::string weight;   ///< tensor name; conv weights are [out,in,k,k], transpose [in,out,k,k]
  std::string bias;     ///< tensor name, may be empty
  std::string save_as;  ///< stash this layer's output under a slot name
  std::string add_from; ///< for `add`: slot whose tensor is added to the running output
};

struct TensorDesc {
  std::string name;
  std::vector<int> shape;
  std::uint64_t offset = 0;  ///< bytes from the start of the payload
  std::uint64_t length = 0;  ///< bytes

  std::size_t count() const;
};

struct ArchiveMetadata {
  double sigma_min = 0.0;  ///< training noise range, [0,1] intensity units
  double sigma_max = 0.0;
  std::string normalization = "intensity/255";
};

/// Parsed and validated neural denoiser definition.
struct WeightArchive {
  DenoiserDomain domain = DenoiserDomain::gradient;
  int in_channels = 0;
  int out_channels = 0;
  Prediction prediction = Prediction::direct;
  ArchiveMetadata metadata;
  std::vector<LayerDesc> layers;
  std::vector<TensorDesc> tensor_table;
  std::map<std::string, std::vector<float>> tensors;

  const std::vector<float>& tensor(const std::string& name) const;
  /// Product of the strides of all resampling layers; inputs are padded to
  /// a multiple of this.
  int size_multiple() const;
};

inline constexpr char kWeightMagic[8] = {'A', 'P', 'N', 'P', 'W', '1', '\0', '\0'};

/// CRC-64/XZ (ECMA-182 polynomial, reflected, all-ones init and xor-out).
std::uint64_t crc64(std::span<const std::uint8_t> bytes);

WeightArchive parse_weights(std::span<const std::uint8_t> bytes);
WeightArchive load_weights(const std::filesystem::path& path);

/// Serializes an archive; tensor offsets are recomputed in layer order.
std::vector<std::uint8_t> serialize_weights(const WeightArchive& archive);
void save_weights(const std::filesystem::path& path, const WeightArchive& archive);

/// Checks the layer chain, tensor shapes and channel counts. Throws
/// ShapeMismatchError or UnsupportedArchiveError.
void validate_archive(const WeightArchive& archive);

}  // namespace apnp
