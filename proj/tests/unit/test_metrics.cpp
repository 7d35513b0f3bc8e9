#include <doctest.h>

#include <cmath>

#include "apnp/errors.hpp"
#include "apnp/metrics.hpp"
#include "support/oracles.hpp"

using namespace apnp;
using namespace apnp::testing;

namespace {

double naive_psnr(const Image& a, const Image& b, int crop) {
  double se = 0.0;
  int count = 0;
  for (int i = crop; i < a.height() - crop; ++i) {
    for (int j = crop; j < a.width() - crop; ++j) {
      se += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
      ++count;
    }
  }
  return 10.0 * std::log10(1.0 / (se / count));
}

// Direct per-window evaluation of the SSIM index.
double naive_ssim(const Image& a, const Image& b) {
  double g[11][11];
  double total = 0.0;
  for (int u = 0; u < 11; ++u) {
    for (int v = 0; v < 11; ++v) {
      g[u][v] = std::exp(-((u - 5) * (u - 5) + (v - 5) * (v - 5)) / (2 * 1.5 * 1.5));
      total += g[u][v];
    }
  }
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double acc = 0.0;
  int windows = 0;
  for (int i = 0; i + 11 <= a.height(); ++i) {
    for (int j = 0; j + 11 <= a.width(); ++j) {
      double ma = 0, mb = 0;
      for (int u = 0; u < 11; ++u) {
        for (int v = 0; v < 11; ++v) {
          ma += g[u][v] / total * a(i + u, j + v);
          mb += g[u][v] / total * b(i + u, j + v);
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int u = 0; u < 11; ++u) {
        for (int v = 0; v < 11; ++v) {
          const double wgt = g[u][v] / total;
          va += wgt * (a(i + u, j + v) - ma) * (a(i + u, j + v) - ma);
          vb += wgt * (b(i + u, j + v) - mb) * (b(i + u, j + v) - mb);
          cov += wgt * (a(i + u, j + v) - ma) * (b(i + u, j + v) - mb);
        }
      }
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return acc / windows;
}

}  // namespace

TEST_CASE("psnr") {
  Rng rng(60);
  const Image a = random_image(20, 24, rng);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(Image(8, 8, 0.2), Image(8, 8, 0.3)) == doctest::Approx(20.0).epsilon(1e-12));
  const Image b = random_image(20, 24, rng);
  CHECK(psnr(a, b) == doctest::Approx(naive_psnr(a, b, 0)).epsilon(1e-12));
  CHECK(psnr(a, b, 3) == doctest::Approx(naive_psnr(a, b, 3)).epsilon(1e-12));
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, Image(20, 23)), SizeError);
  CHECK_THROWS_AS(psnr(a, b, 10), ParameterError);
}

TEST_CASE("ssim") {
  Rng rng(61);
  SUBCASE("identical images score one") {
    const Image a = random_image(16, 16, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two constants reduce to the luminance term") {
    const double p = 0.4;
    const double q = 0.6;
    const double c1 = 1e-4;
    const double want = (2 * p * q + c1) / (p * p + q * q + c1);
    CHECK(ssim(Image(15, 15, p), Image(15, 15, q)) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("matches a direct window-by-window evaluation") {
    const Image a = random_image(19, 23, rng);
    Image b = a;
    for (double& v : b.values()) v = 0.8 * v + 0.1;
    b += random_image(19, 23, rng, -0.05, 0.05);
    CHECK(ssim(a, b) == doctest::Approx(naive_ssim(a, b)).epsilon(1e-10));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  }
  SUBCASE("more noise lowers the score") {
    const Image a = circ_conv(random_image(32, 32, rng), gaussian_kernel(1.5, 1.5, 0.0, 7));
    double last = 1.0;
    for (double s : {0.01, 0.03, 0.1, 0.3}) {
      const double v = ssim(a, a + awgn(32, 32, s, 5));
      CHECK(v < last);
      last = v;
    }
  }
  SUBCASE("images smaller than the window are rejected") {
    CHECK_THROWS_AS(ssim(Image(10, 20), Image(10, 20)), SizeError);
  }
}

TEST_CASE("evaluate crops both images") {
  Rng rng(62);
  const Image a = random_image(30, 30, rng);
  const Image b = random_image(30, 30, rng);
  const MetricReport r = evaluate(a, b, 2);
  CHECK(r.crop_border == 2);
  CHECK(r.psnr == doctest::Approx(naive_psnr(a, b, 2)).epsilon(1e-12));
  CHECK(r.ssim == doctest::Approx(ssim(crop_border(a, 2), crop_border(b, 2))).epsilon(1e-14));
  CHECK(crop_border(a, 2).height() == 26);
}
