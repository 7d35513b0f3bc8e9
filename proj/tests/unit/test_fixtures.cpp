#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "apnp/denoise.hpp"
#include "apnp/io.hpp"
#include "apnp/neural.hpp"
#include "apnp/operators.hpp"
#include "apnp/weights.hpp"

using namespace apnp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = APNP_TEST_DATA;

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Fixture container: "APNPF1\0\0", u32 header length, JSON header,
// float32 payload, CRC-64 of the payload.
struct FixtureFile {
  json header;
  std::vector<std::uint8_t> payload;

  explicit FixtureFile(const fs::path& path) {
    const std::vector<std::uint8_t> bytes = slurp(path);
    REQUIRE(bytes.size() > 20);
    REQUIRE(std::memcmp(bytes.data(), "APNPF1\0\0", 8) == 0);
    const std::uint32_t len = read_u32(bytes.data() + 8);
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    payload.assign(bytes.begin() + 12 + len, bytes.end() - 8);
    std::uint64_t crc = 0;
    for (int b = 0; b < 8; ++b) crc |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + b]) << (8 * b);
    REQUIRE(crc == crc64(payload));
  }

  FeatureMap tensor(const json& t) const {
    const auto shape = t.at("shape").get<std::vector<int>>();
    FeatureMap fm(shape[0], shape[1], shape[2]);
    std::memcpy(fm.data.data(), payload.data() + t.at("offset").get<std::size_t>(),
                fm.data.size() * sizeof(float));
    return fm;
  }
};

float max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  float m = 0.0f;
  for (std::size_t n = 0; n < a.data.size(); ++n) m = std::max(m, std::abs(a.data[n] - b.data[n]));
  return m;
}

json archive_header(const fs::path& p) {
  const std::vector<std::uint8_t> bytes = slurp(p);
  return json::parse(bytes.begin() + 12, bytes.begin() + 12 + read_u32(bytes.data() + 8));
}

}  // namespace

TEST_CASE("trained archives match their exported fixtures") {
  for (const std::string domain : {"gradient", "image"}) {
    CAPTURE(domain);
    const fs::path archive_path = kData / (domain + "_desk.apnpw");
    const WeightArchive archive = load_weights(archive_path);
    CHECK(to_string(archive.domain) == domain);
    CHECK(archive.layers.size() == archive_header(archive_path).at("layers").size());
    CHECK(archive.in_channels == (domain == "gradient" ? 3 : 2));

    const FixtureFile fixtures(kData / (domain + "_desk.fixtures"));
    const double tol = fixtures.header.at("tolerance").get<double>();
    CHECK(tol == 1e-4);
    const json& entries = fixtures.header.at("fixtures");
    CHECK(entries.size() == 17);
    for (const json& f : entries) {
      CAPTURE(f.at("name").get<std::string>());
      const FeatureMap in = fixtures.tensor(f.at("input"));
      const FeatureMap want = fixtures.tensor(f.at("output"));
      CHECK(in.channels == archive.in_channels);
      const FeatureMap got = neural_forward(archive, in);
      REQUIRE(got.channels == want.channels);
      CHECK(max_abs_diff(got, want) <= tol);
    }
  }
}

TEST_CASE("zero input yields a spatially constant bias response away from the borders") {
  const FixtureFile fixtures(kData / "gradient_desk.fixtures");
  const json& zero = fixtures.header.at("fixtures").at(0);
  REQUIRE(zero.at("name") == "zero");
  const FeatureMap want = fixtures.tensor(zero.at("output"));
  const WeightArchive archive = load_weights(kData / "gradient_desk.apnpw");
  const FeatureMap got = neural_forward(archive, FeatureMap(3, 24, 24));
  CHECK(max_abs_diff(got, want) <= 1e-4f);
  // Interior pixels see no padding, so every one carries the same response.
  for (int c = 0; c < got.channels; ++c) {
    CHECK(got.at(c, 10, 10) == doctest::Approx(got.at(c, 12, 12)).epsilon(1e-5));
  }
}

TEST_CASE("desk gradient denoiser beats the noisy input on held-out images") {
  const Denoiser d = Denoiser::neural(kData / "gradient_desk.apnpw");
  const double sigma = 25.0 * std::sqrt(2.0) / 255.0;
  int images = 0;
  for (const auto& entry : fs::directory_iterator(kData / "testset")) {
    const Image x = read_image(entry.path());
    const GradientField clean = grad(x);
    GradientField noisy = clean;
    noisy.dh += awgn(x.height(), x.width(), sigma, 100 + images);
    noisy.dv += awgn(x.height(), x.width(), sigma, 200 + images);
    const GradientField out = denoise(d, noisy, sigma);
    const double before = squared_norm(noisy - clean);
    const double after = squared_norm(out - clean);
    const double gain_db = 10.0 * std::log10(before / after);
    CAPTURE(entry.path().filename().string());
    CHECK(gain_db >= 3.0);
    ++images;
  }
  CHECK(images == 3);
}
