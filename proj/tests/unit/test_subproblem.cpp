#include <doctest.h>

#include <cmath>

#include "apnp/errors.hpp"
#include "apnp/subproblem.hpp"
#include "support/oracles.hpp"

using namespace apnp;
using namespace apnp::testing;

namespace {

struct Instance {
  int h;
  int w;
  int s;
  BlurKernel k;
  Image y;
  GradientField z;
  Image zi;
  double alpha;
};

Instance make_instance(Rng& rng, int h, int w, int s) {
  std::uniform_int_distribution<int> half(0, 2);
  std::uniform_real_distribution<double> log_alpha(-3.0, 1.0);
  Instance in{h, w, s, random_kernel(2 * half(rng) + 1, rng), random_image(h / s, w / s, rng),
              random_field(h, w, rng), random_image(h, w, rng),
              std::pow(10.0, log_alpha(rng))};
  return in;
}

Eigen::VectorXd oracle_grad(const Instance& in) {
  return dense_normal_solve(dense_forward(in.k, in.h, in.w, in.s), to_vec(in.y),
                            dense_grad(in.h, in.w), to_vec(in.z), in.alpha);
}

Eigen::VectorXd oracle_image(const Instance& in) {
  const int n = in.h * in.w;
  return dense_normal_solve(dense_forward(in.k, in.h, in.w, in.s), to_vec(in.y),
                            Eigen::MatrixXd::Identity(n, n), to_vec(in.zi), in.alpha);
}

}  // namespace

TEST_CASE("subproblem solvers agree with the dense normal equations") {
  Rng rng(20);
  int instances = 0;
  for (int s : {1, 2, 3}) {
    for (const auto& [h, w] : {std::pair{12, 12}, std::pair{6 * s, 12}, std::pair{12, 6 * s}}) {
      for (int rep = 0; rep < 3; ++rep) {
        const Instance in = make_instance(rng, h, w, s);
        const SolverContext ctx(in.k, h, w, s);
        CAPTURE(s);
        CAPTURE(h);
        CAPTURE(w);
        CAPTURE(in.alpha);
        CHECK(rel_err(to_vec(solve_grad(ctx, in.y, in.z, in.alpha)), oracle_grad(in)) < 1e-5);
        CHECK(rel_err(to_vec(solve_image(ctx, in.y, in.zi, in.alpha)), oracle_image(in)) < 1e-5);
        ++instances;
      }
    }
  }
  // 8x8 instances too, since that size divides by 2 but not by 3.
  for (int s : {1, 2}) {
    for (int rep = 0; rep < 3; ++rep) {
      const Instance in = make_instance(rng, 8, 8, s);
      const SolverContext ctx(in.k, 8, 8, s);
      CHECK(rel_err(to_vec(solve_grad(ctx, in.y, in.z, in.alpha)), oracle_grad(in)) < 1e-5);
      CHECK(rel_err(to_vec(solve_image(ctx, in.y, in.zi, in.alpha)), oracle_image(in)) < 1e-5);
      ++instances;
    }
  }
  CHECK(instances >= 20);
}

TEST_CASE("solution satisfies the normal equations") {
  Rng rng(21);
  for (int s : {1, 2, 3}) {
    const Instance in = make_instance(rng, 12, 12, s);
    const SolverContext ctx(in.k, 12, 12, s);
    const Eigen::MatrixXd a = dense_forward(in.k, 12, 12, s);
    const Eigen::MatrixXd d = dense_grad(12, 12);
    const Eigen::VectorXd x = to_vec(solve_grad(ctx, in.y, in.z, in.alpha));
    const Eigen::VectorXd r = a.transpose() * (a * x - to_vec(in.y)) +
                              in.alpha * d.transpose() * (d * x - to_vec(in.z));
    const Eigen::VectorXd rhs = a.transpose() * to_vec(in.y) + in.alpha * d.transpose() * to_vec(in.z);
    CHECK(r.norm() / rhs.norm() < 1e-8);
  }
}

TEST_CASE("random perturbations do not decrease the objective") {
  Rng rng(22);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int s : {1, 2, 3}) {
    const Instance in = make_instance(rng, 12, 12, s);
    const SolverContext ctx(in.k, 12, 12, s);
    const DegradationSpec spec{in.k, s, 0.0};
    auto objective = [&](const Image& x) {
      return squared_norm(forward_apply(spec, x) - in.y) + in.alpha * squared_norm(grad(x) - in.z);
    };
    const Image x = solve_grad(ctx, in.y, in.z, in.alpha);
    const double best = objective(x);
    for (int trial = 0; trial < 20; ++trial) {
      Image dx(12, 12);
      for (double& v : dx.values()) v = 1e-3 * nd(rng);
      CHECK(objective(x + dx) >= best - 1e-12);
    }
  }
}

TEST_CASE("fast and reference super-resolution paths agree") {
  Rng rng(23);
  for (int s : {2, 3, 4}) {
    for (int rep = 0; rep < 4; ++rep) {
      const Instance in = make_instance(rng, 12, 12, s);
      const SolverContext ctx(in.k, 12, 12, s);
      const Image fast = solve_grad_sr(ctx, in.y, in.z, in.alpha, SrPath::fast);
      const Image ref = solve_grad_sr(ctx, in.y, in.z, in.alpha, SrPath::reference);
      CHECK(rel_err(fast, ref) < 1e-8);
    }
  }
}

TEST_CASE("hand-solved 2x2 super-resolution") {
  const SolverContext ctx(BlurKernel::identity(), 2, 2, 2);
  const Image y(1, 1, 0.8);
  SUBCASE("image prior with z = 0 and alpha = 1 halves the observed sample") {
    // min (x00 - y0)^2 + |x|^2 gives x00 = y0 / 2 and zeros elsewhere.
    const Image x = solve_image_sr(ctx, y, Image(2, 2), 1.0);
    CHECK(x(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(std::abs(x(0, 1)) < 1e-12);
    CHECK(std::abs(x(1, 0)) < 1e-12);
    CHECK(std::abs(x(1, 1)) < 1e-12);
  }
  SUBCASE("gradient prior with z = 0 spreads the sample to a constant") {
    for (double alpha : {0.01, 1.0, 100.0}) {
      const Image x = solve_grad_sr(ctx, y, GradientField(2, 2), alpha);
      for (double v : x.values()) CHECK(v == doctest::Approx(0.8).epsilon(1e-10));
    }
  }
}

TEST_CASE("scale 1 closed forms") {
  Rng rng(24);
  const SolverContext ctx(BlurKernel::identity(), 6, 6, 1);
  const Image y = random_image(6, 6, rng);
  const Image z = random_image(6, 6, rng);
  const Image x = solve_image_deblur(ctx, y, z, 0.5);
  CHECK(rel_err(x, (1.0 / 1.5) * (y + 0.5 * z)) < 1e-12);
}

TEST_CASE("large alpha recovers the signal whose gradient is z") {
  Rng rng(25);
  for (int s : {1, 2}) {
    const BlurKernel k = random_kernel(3, rng);
    const Image truth = random_image(12, 12, rng);
    const Image y = forward_apply(DegradationSpec{k, s, 0.0}, truth);
    const SolverContext ctx(k, 12, 12, s);
    CHECK(rel_err(solve_grad(ctx, y, grad(truth), 1e8), truth) < 1e-6);
    const Image z = random_image(12, 12, rng);
    CHECK(rel_err(solve_image(ctx, y, z, 1e8), z) < 1e-6);
  }
}

TEST_CASE("solver input validation") {
  Rng rng(26);
  const SolverContext ctx(random_kernel(3, rng), 8, 8, 2);
  const Image y(4, 4);
  const GradientField z(8, 8);
  CHECK_THROWS_AS(solve_grad(ctx, y, z, 0.0), ParameterError);
  CHECK_THROWS_AS(solve_grad(ctx, y, z, -1.0), ParameterError);
  CHECK_THROWS_AS(solve_image(ctx, y, Image(8, 8), 0.0), ParameterError);
  CHECK_THROWS_AS(solve_grad(ctx, Image(3, 4), z, 1.0), SizeError);
  CHECK_THROWS_AS(solve_grad(ctx, y, GradientField(8, 6), 1.0), SizeError);
  CHECK_THROWS_AS(SolverContext(BlurKernel::identity(), 9, 8, 2), SizeError);
  CHECK_THROWS_AS(SolverContext(BlurKernel::identity(), 8, 8, 5), ParameterError);
  CHECK_THROWS_AS(solve_grad_deblur(ctx, y, z, 1.0), ParameterError);
}

TEST_CASE("a kernel with zero DC gain makes the gradient problem ill-posed") {
  std::vector<double> taps(9, 0.0);
  taps[3] = -0.5;
  taps[5] = 0.5;
  const SolverContext ctx(BlurKernel(3, taps), 8, 8, 1);
  CHECK_THROWS_AS(solve_grad_deblur(ctx, Image(8, 8), GradientField(8, 8), 1.0), IllPosedError);
  const SolverContext sr(BlurKernel(3, taps), 8, 8, 2);
  CHECK_THROWS_AS(solve_grad_sr(sr, Image(4, 4), GradientField(8, 8), 1.0), IllPosedError);
}
