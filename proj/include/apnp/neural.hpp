#pragma once

#include <vector>

#include "apnp/weights.hpp"

namespace apnp {

/// Channel-major (C, H, W) single-precision feature map.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int i, int j) {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  float at(int c, int i, int j) const {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

/// Runs the archive's layer chain on `input`.
///
/// Height and width must be multiples of archive.size_multiple(). The output
/// is the raw network output (the residual/direct convention is applied by
/// the denoiser, not here).
FeatureMap neural_forward(const WeightArchive& archive, const FeatureMap& input);

}  // namespace apnp
