#include "apnp/weights.hpp"

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace apnp {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "weight archives are decoded assuming a little-endian host");

std::string to_string(DenoiserDomain d) {
  return d == DenoiserDomain::gradient ? "gradient" : "image";
}

std::string to_string(Prediction p) { return p == Prediction::direct ? "direct" : "residual"; }

std::string to_string(LayerType t) {
  switch (t) {
    case LayerType::conv2d: return "conv2d";
    case LayerType::conv_transpose2d: return "conv_transpose2d";
    case LayerType::relu: return "relu";
    case LayerType::add: return "add";
  }
  return "unknown";
}

std::size_t TensorDesc::count() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(std::max(d, 0));
  return n;
}

const std::vector<float>& WeightArchive::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ShapeMismatchError("archive has no tensor named '" + name + "'");
  return it->second;
}

int WeightArchive::size_multiple() const {
  int multiple = 1;
  int current = 1;
  for (const LayerDesc& layer : layers) {
    if (layer.type == LayerType::conv2d && layer.stride > 1) {
      current *= layer.stride;
      multiple = std::max(multiple, current);
    } else if (layer.type == LayerType::conv_transpose2d && layer.stride > 1) {
      current /= layer.stride;
    }
  }
  return multiple;
}

std::uint64_t crc64(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

namespace {

LayerType parse_layer_type(const std::string& type, const std::string& name) {
  if (type == "conv2d") return LayerType::conv2d;
  if (type == "conv_transpose2d") return LayerType::conv_transpose2d;
  if (type == "relu") return LayerType::relu;
  if (type == "add") return LayerType::add;
  throw UnsupportedArchiveError("layer '" + name + "' has unsupported type '" + type + "'");
}

std::vector<int> expected_weight_shape(const LayerDesc& l) {
  if (l.type == LayerType::conv2d) return {l.out_channels, l.in_channels, l.kernel, l.kernel};
  return {l.in_channels, l.out_channels, l.kernel, l.kernel};
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

const TensorDesc* find_desc(const WeightArchive& a, const std::string& name) {
  for (const TensorDesc& t : a.tensor_table) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void check_tensor(const WeightArchive& a, const LayerDesc& layer, const std::string& name,
                  const std::vector<int>& expected) {
  auto stored = a.tensors.find(name);
  if (stored == a.tensors.end()) {
    throw ShapeMismatchError("layer '" + layer.name + "' references missing tensor '" + name + "'");
  }
  const TensorDesc* desc = find_desc(a, name);
  if (desc == nullptr) {
    // In-memory archive without a tensor table: only the element count is known.
    const TensorDesc implied{name, expected, 0, 0};
    if (stored->second.size() != implied.count()) {
      throw ShapeMismatchError("tensor '" + name + "' has " +
                               std::to_string(stored->second.size()) + " values, layer '" +
                               layer.name + "' needs " + shape_string(expected));
    }
    return;
  }
  if (desc->shape != expected) {
    throw ShapeMismatchError("tensor '" + name + "' has shape " + shape_string(desc->shape) +
                             ", layer '" + layer.name + "' needs " + shape_string(expected));
  }
  if (desc->length != desc->count() * sizeof(float)) {
    throw ShapeMismatchError("tensor '" + name + "' declares " + std::to_string(desc->length) +
                             " bytes for shape " + shape_string(desc->shape));
  }
  if (stored->second.size() != desc->count()) {
    throw ShapeMismatchError("tensor '" + name + "' payload does not match its declared shape");
  }
}

std::uint32_t read_u32(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

std::uint64_t read_u64(const std::uint8_t* p) {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

}  // namespace

void validate_archive(const WeightArchive& a) {
  const int expected_in = a.domain == DenoiserDomain::gradient ? 3 : 2;
  const int expected_out = a.domain == DenoiserDomain::gradient ? 2 : 1;
  if (a.in_channels != expected_in || a.out_channels != expected_out) {
    throw ShapeMismatchError(to_string(a.domain) + "-domain archive must map " +
                             std::to_string(expected_in) + " -> " + std::to_string(expected_out) +
                             " channels, header declares " + std::to_string(a.in_channels) +
                             " -> " + std::to_string(a.out_channels));
  }
  if (a.layers.empty()) throw ShapeMismatchError("archive declares no layers");

  struct Slot {
    int channels;
    int level;
  };
  std::map<std::string, Slot> slots;
  int channels = a.in_channels;
  int level = 1;  // cumulative downsampling factor
  for (const LayerDesc& layer : a.layers) {
    switch (layer.type) {
      case LayerType::conv2d:
      case LayerType::conv_transpose2d: {
        if (layer.in_channels != channels) {
          throw ShapeMismatchError("layer '" + layer.name + "' expects " +
                                   std::to_string(layer.in_channels) + " input channels, chain provides " +
                                   std::to_string(channels));
        }
        if (layer.kernel < 1 || layer.stride < 1 || layer.padding < 0 || layer.out_channels < 1) {
          throw ShapeMismatchError("layer '" + layer.name + "' has invalid geometry");
        }
        if (layer.type == LayerType::conv2d && layer.stride == 1 &&
            2 * layer.padding != layer.kernel - 1) {
          throw UnsupportedArchiveError("layer '" + layer.name +
                                        "': stride-1 convolutions must be size-preserving");
        }
        if (layer.stride > 1 && (layer.kernel != layer.stride || layer.padding != 0)) {
          throw UnsupportedArchiveError("layer '" + layer.name +
                                        "': resampling layers need kernel == stride, padding 0");
        }
        if (layer.type == LayerType::conv_transpose2d && layer.stride == 1 &&
            2 * layer.padding != layer.kernel - 1) {
          throw UnsupportedArchiveError("layer '" + layer.name +
                                        "': stride-1 transpose convolutions must be size-preserving");
        }
        check_tensor(a, layer, layer.weight, expected_weight_shape(layer));
        if (!layer.bias.empty()) check_tensor(a, layer, layer.bias, {layer.out_channels});
        channels = layer.out_channels;
        if (layer.type == LayerType::conv2d) {
          level *= layer.stride;
        } else {
          if (level % layer.stride != 0) {
            throw ShapeMismatchError("layer '" + layer.name + "' upsamples past full resolution");
          }
          level /= layer.stride;
        }
        break;
      }
      case LayerType::relu:
        break;
      case LayerType::add: {
        auto it = slots.find(layer.add_from);
        if (it == slots.end()) {
          throw ShapeMismatchError("layer '" + layer.name + "' adds unknown slot '" +
                                   layer.add_from + "'");
        }
        if (it->second.channels != channels || it->second.level != level) {
          throw ShapeMismatchError("layer '" + layer.name + "' adds slot '" + layer.add_from +
                                   "' of incompatible shape");
        }
        break;
      }
    }
    if (!layer.save_as.empty()) slots[layer.save_as] = Slot{channels, level};
  }
  if (channels != a.out_channels) {
    throw ShapeMismatchError("layer chain ends with " + std::to_string(channels) +
                             " channels, header declares " + std::to_string(a.out_channels));
  }
  if (level != 1) throw ShapeMismatchError("layer chain does not return to full resolution");
}

WeightArchive parse_weights(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kPrefix = sizeof(kWeightMagic) + sizeof(std::uint32_t);
  constexpr std::size_t kTrailer = sizeof(std::uint64_t);
  const std::size_t head = std::min(bytes.size(), sizeof(kWeightMagic));
  if (std::memcmp(bytes.data(), kWeightMagic, head) != 0 || bytes.empty()) {
    throw BadMagicError("not a weight archive: magic bytes do not match APNPW1");
  }
  if (head < sizeof(kWeightMagic)) throw TruncatedArchiveError("archive ends inside the magic");
  if (bytes.size() < kPrefix) throw TruncatedArchiveError("archive ends inside the header length");
  const std::uint32_t header_len = read_u32(bytes.data() + sizeof(kWeightMagic));
  if (bytes.size() < kPrefix + header_len + kTrailer) {
    throw TruncatedArchiveError("archive ends inside the header or checksum");
  }
  const std::size_t payload_begin = kPrefix + header_len;
  const std::size_t payload_size = bytes.size() - payload_begin - kTrailer;
  auto payload = bytes.subspan(payload_begin, payload_size);

  json header;
  try {
    header = json::parse(bytes.begin() + kPrefix, bytes.begin() + payload_begin);
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed archive header: ") + e.what());
  }

  WeightArchive a;
  try {
    const std::string domain = header.at("domain").get<std::string>();
    if (domain == "gradient") {
      a.domain = DenoiserDomain::gradient;
    } else if (domain == "image") {
      a.domain = DenoiserDomain::image;
    } else {
      throw UnsupportedArchiveError("unknown denoiser domain '" + domain + "'");
    }
    a.in_channels = header.at("in_channels").get<int>();
    a.out_channels = header.at("out_channels").get<int>();
    const std::string prediction = header.value("prediction", "direct");
    if (prediction == "direct") {
      a.prediction = Prediction::direct;
    } else if (prediction == "residual") {
      a.prediction = Prediction::residual;
    } else {
      throw UnsupportedArchiveError("unknown prediction convention '" + prediction + "'");
    }
    if (header.contains("metadata")) {
      const json& m = header["metadata"];
      if (m.contains("sigma_range")) {
        a.metadata.sigma_min = m["sigma_range"].at(0).get<double>();
        a.metadata.sigma_max = m["sigma_range"].at(1).get<double>();
      }
      a.metadata.normalization = m.value("normalization", a.metadata.normalization);
    }

    int index = 0;
    for (const json& l : header.at("layers")) {
      LayerDesc d;
      d.name = l.value("name", "layer" + std::to_string(index));
      d.type = parse_layer_type(l.at("type").get<std::string>(), d.name);
      if (d.type == LayerType::conv2d || d.type == LayerType::conv_transpose2d) {
        d.in_channels = l.at("in").get<int>();
        d.out_channels = l.at("out").get<int>();
        d.kernel = l.at("kernel").get<int>();
        d.stride = l.value("stride", 1);
        d.padding = l.value("padding", d.stride == 1 ? (d.kernel - 1) / 2 : 0);
        d.weight = l.at("weight").get<std::string>();
        d.bias = l.value("bias", "");
      } else if (d.type == LayerType::add) {
        d.add_from = l.at("from").get<std::string>();
      }
      d.save_as = l.value("save_as", "");
      a.layers.push_back(std::move(d));
      ++index;
    }

    for (const json& t : header.at("tensors")) {
      TensorDesc d;
      d.name = t.at("name").get<std::string>();
      d.shape = t.at("shape").get<std::vector<int>>();
      d.offset = t.at("offset").get<std::uint64_t>();
      d.length = t.value("length", static_cast<std::uint64_t>(d.count() * sizeof(float)));
      a.tensor_table.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed archive header: ") + e.what());
  }

  for (const TensorDesc& d : a.tensor_table) {
    if (d.offset > payload.size() || d.length > payload.size() - d.offset) {
      throw TruncatedArchiveError("tensor '" + d.name + "' (" + std::to_string(d.length) +
                                  " bytes at offset " + std::to_string(d.offset) +
                                  ") extends past the " + std::to_string(payload.size()) +
                                  "-byte payload");
    }
    if (d.length % sizeof(float) != 0) {
      throw ShapeMismatchError("tensor '" + d.name + "' length is not a whole number of floats");
    }
    std::vector<float> values(d.length / sizeof(float));
    std::memcpy(values.data(), payload.data() + d.offset, d.length);
    a.tensors[d.name] = std::move(values);
  }

  const std::uint64_t stored = read_u64(bytes.data() + bytes.size() - kTrailer);
  if (crc64(payload) != stored) throw ChecksumError("payload checksum mismatch");

  validate_archive(a);
  return a;
}

WeightArchive load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight archive " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_weights(bytes);
}

std::vector<std::uint8_t> serialize_weights(const WeightArchive& a) {
  // Tensor order: as first referenced by the layer chain, then the rest.
  std::vector<std::string> order;
  std::set<std::string> seen;
  auto push = [&](const std::string& name) {
    if (!name.empty() && a.tensors.count(name) && seen.insert(name).second) order.push_back(name);
  };
  for (const LayerDesc& l : a.layers) {
    push(l.weight);
    push(l.bias);
  }
  for (const auto& [name, values] : a.tensors) push(name);

  std::vector<std::uint8_t> payload;
  json tensors = json::array();
  for (const std::string& name : order) {
    const std::vector<float>& values = a.tensors.at(name);
    std::vector<int> shape{static_cast<int>(values.size())};
    for (const LayerDesc& l : a.layers) {
      if (l.weight == name) shape = expected_weight_shape(l);
      if (l.bias == name) shape = {l.out_channels};
    }
    if (const TensorDesc* d = find_desc(a, name)) shape = d->shape;
    const std::size_t offset = payload.size();
    const std::size_t length = values.size() * sizeof(float);
    payload.resize(offset + length);
    std::memcpy(payload.data() + offset, values.data(), length);
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"length", length}});
  }

  json layers = json::array();
  for (const LayerDesc& l : a.layers) {
    json j = {{"name", l.name}, {"type", to_string(l.type)}};
    if (l.type == LayerType::conv2d || l.type == LayerType::conv_transpose2d) {
      j["in"] = l.in_channels;
      j["out"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["padding"] = l.padding;
      j["weight"] = l.weight;
      if (!l.bias.empty()) j["bias"] = l.bias;
    }
    if (l.type == LayerType::add) j["from"] = l.add_from;
    if (!l.save_as.empty()) j["save_as"] = l.save_as;
    layers.push_back(std::move(j));
  }

  json header = {
      {"domain", to_string(a.domain)},
      {"in_channels", a.in_channels},
      {"out_channels", a.out_channels},
      {"prediction", to_string(a.prediction)},
      {"metadata",
       {{"sigma_range", {a.metadata.sigma_min, a.metadata.sigma_max}},
        {"normalization", a.metadata.normalization}}},
      {"layers", layers},
      {"tensors", tensors},
  };
  const std::string text = header.dump(1);

  std::vector<std::uint8_t> out(kWeightMagic, kWeightMagic + sizeof(kWeightMagic));
  append_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  append_le(out, crc64(payload));
  return out;
}

void save_weights(const std::filesystem::path& path, const WeightArchive& archive) {
  const std::vector<std::uint8_t> bytes = serialize_weights(archive);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weight archive " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing weight archive " + path.string());
}

}  // namespace apnp
