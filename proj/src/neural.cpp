#include "apnp/neural.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <map>
#include <string>

namespace apnp {

namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Caps the im2col buffer at ~64 MB by processing output rows in bands.
constexpr std::size_t kMaxColumnFloats = std::size_t{16} << 20;

FeatureMap conv2d(const FeatureMap& in, const LayerDesc& layer, const WeightArchive& archive) {
  const int k = layer.kernel;
  const int stride = layer.stride;
  const int pad = layer.padding;
  const int out_h = (in.height + 2 * pad - k) / stride + 1;
  const int out_w = (in.width + 2 * pad - k) / stride + 1;
  const int patch = in.channels * k * k;
  FeatureMap out(layer.out_channels, out_h, out_w);

  Eigen::Map<const RowMajorF> weights(archive.tensor(layer.weight).data(), layer.out_channels,
                                      patch);
  const int band = std::max<int>(
      1, static_cast<int>(kMaxColumnFloats / (static_cast<std::size_t>(patch) * out_w)));
  RowMajorF columns;
  RowMajorF result;
  for (int row0 = 0; row0 < out_h; row0 += band) {
    const int rows = std::min(band, out_h - row0);
    const int n = rows * out_w;
    columns.resize(patch, n);
    for (int c = 0; c < in.channels; ++c) {
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          float* dst = columns.row((c * k + a) * k + b).data();
          for (int oi = 0; oi < rows; ++oi) {
            const int si = (row0 + oi) * stride + a - pad;
            for (int oj = 0; oj < out_w; ++oj) {
              const int sj = oj * stride + b - pad;
              const bool inside = si >= 0 && si < in.height && sj >= 0 && sj < in.width;
              dst[oi * out_w + oj] = inside ? in.at(c, si, sj) : 0.0f;
            }
          }
        }
      }
    }
    result.noalias() = weights * columns;
    for (int o = 0; o < layer.out_channels; ++o) {
      std::copy_n(result.row(o).data(), n,
                  out.data.begin() + static_cast<std::ptrdiff_t>(o * out.plane() +
                                                                 static_cast<std::size_t>(row0) * out_w));
    }
  }
  if (!layer.bias.empty()) {
    const std::vector<float>& bias = archive.tensor(layer.bias);
    for (int o = 0; o < layer.out_channels; ++o) {
      float* p = out.data.data() + o * out.plane();
      for (std::size_t n = 0; n < out.plane(); ++n) p[n] += bias[o];
    }
  }
  return out;
}

FeatureMap conv_transpose2d(const FeatureMap& in, const LayerDesc& layer,
                            const WeightArchive& archive) {
  const int k = layer.kernel;
  const int stride = layer.stride;
  const int pad = layer.padding;
  const int out_h = (in.height - 1) * stride - 2 * pad + k;
  const int out_w = (in.width - 1) * stride - 2 * pad + k;
  const int patch = layer.out_channels * k * k;
  FeatureMap out(layer.out_channels, out_h, out_w);

  // Weight layout [in, out, k, k] viewed as (in) x (out*k*k).
  Eigen::Map<const RowMajorF> weights(archive.tensor(layer.weight).data(), in.channels, patch);
  Eigen::Map<const RowMajorF> input(in.data.data(), in.channels,
                                    static_cast<Eigen::Index>(in.plane()));
  const RowMajorF columns = weights.transpose() * input;

  for (int o = 0; o < layer.out_channels; ++o) {
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const float* src = columns.row((o * k + a) * k + b).data();
        for (int i = 0; i < in.height; ++i) {
          const int di = i * stride + a - pad;
          if (di < 0 || di >= out_h) continue;
          for (int j = 0; j < in.width; ++j) {
            const int dj = j * stride + b - pad;
            if (dj < 0 || dj >= out_w) continue;
            out.at(o, di, dj) += src[i * in.width + j];
          }
        }
      }
    }
  }
  if (!layer.bias.empty()) {
    const std::vector<float>& bias = archive.tensor(layer.bias);
    for (int o = 0; o < layer.out_channels; ++o) {
      float* p = out.data.data() + o * out.plane();
      for (std::size_t n = 0; n < out.plane(); ++n) p[n] += bias[o];
    }
  }
  return out;
}

}  // namespace

FeatureMap neural_forward(const WeightArchive& archive, const FeatureMap& input) {
  if (input.channels != archive.in_channels) {
    throw ShapeMismatchError("network expects " + std::to_string(archive.in_channels) +
                             " input channels, got " + std::to_string(input.channels));
  }
  const int multiple = archive.size_multiple();
  if (input.height % multiple != 0 || input.width % multiple != 0) {
    throw SizeError("network input " + std::to_string(input.height) + "x" +
                    std::to_string(input.width) + " must be a multiple of " +
                    std::to_string(multiple));
  }

  std::map<std::string, FeatureMap> slots;
  FeatureMap current = input;
  for (const LayerDesc& layer : archive.layers) {
    switch (layer.type) {
      case LayerType::conv2d:
        current = conv2d(current, layer, archive);
        break;
      case LayerType::conv_transpose2d:
        current = conv_transpose2d(current, layer, archive);
        break;
      case LayerType::relu:
        for (float& v : current.data) v = std::max(v, 0.0f);
        break;
      case LayerType::add: {
        const FeatureMap& other = slots.at(layer.add_from);
        if (other.channels != current.channels || other.height != current.height ||
            other.width != current.width) {
          throw ShapeMismatchError("skip connection '" + layer.add_from + "' shape mismatch at '" +
                                   layer.name + "'");
        }
        for (std::size_t n = 0; n < current.data.size(); ++n) current.data[n] += other.data[n];
        break;
      }
    }
    if (!layer.save_as.empty()) slots[layer.save_as] = current;
  }
  return current;
}

}  // namespace apnp
