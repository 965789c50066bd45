#include <doctest.h>

#include <cmath>
#include <vector>

#include "sidlab/errors.hpp"
#include "sidlab/invariant_density.hpp"

using namespace sidlab;

namespace {

GridDensity gaussian_on(const GridSpec& g, double mean, double sd) {
  std::vector<double> v(g.n);
  for (int i = 0; i < g.n; ++i) {
    const double z = (g.x(i) - mean) / sd;
    v[i] = std::exp(-0.5 * z * z);
  }
  return GridDensity(g, std::move(v));
}

}  // namespace

TEST_SUITE_BEGIN("invariant_density");

TEST_CASE("grid density normalizes on construction") {
  const GridSpec g{-1.0, 1.0, 201};
  const auto d = GridDensity::uniform(g);
  CHECK(d.integral() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(GridDensity(g, std::vector<double>(201, -1.0)), UsageError);
  CHECK_THROWS_AS(GridDensity(g, std::vector<double>(200, 1.0)), UsageError);
  CHECK_THROWS_AS(GridDensity(g, std::vector<double>(201, 0.0)), UsageError);
}

TEST_CASE("apply_Pi with no interaction is the plain Gibbs density") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::zero(1);
  const GridSpec g{-6.0, 6.0, 2001};
  const auto out = apply_Pi(GridDensity::uniform(g), V, W, 1.0);
  CHECK(out.integral() == doctest::Approx(1.0).epsilon(1e-10));
  // Gaussian with variance sigma^2 / (2 rho) = 0.5
  CHECK(out.variance() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(out.mean() == doctest::Approx(0.0).epsilon(1e-12));
  for (int i = 1; i < g.n - 1; ++i) CHECK(out.values()[i] > 0.0);
}

TEST_CASE("apply_Pi on a near-Dirac input freezes the interaction at m") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  const GridSpec g{-6.0, 6.0, 1201};
  const double sigma = 0.8;
  const auto out = apply_Pi(GridDensity::dirac(g, 0.0), V, W, sigma);
  // Expected: density proportional to exp(-(2/s^2)(V(x) + W(x - 0))).
  std::vector<double> v(g.n);
  const double beta = 2.0 / (sigma * sigma);
  for (int i = 0; i < g.n; ++i) {
    const Vec x{g.x(i)};
    const Vec diff{g.x(i)};
    v[i] = std::exp(-beta * (V.value(x) + W.value(diff)));
  }
  const GridDensity expected(g, std::move(v));
  for (int i = 0; i < g.n; ++i)
    CHECK(out.values()[i] ==
          doctest::Approx(expected.values()[i]).epsilon(1e-12));
}

TEST_CASE("apply_Pi preserves symmetry about the common center") {
  const double q = 0.5;
  const auto V = PotentialSpec::quadratic({q}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  const GridSpec g{q - 5.0, q + 5.0, 1001};  // grid symmetric about q
  const auto in = gaussian_on(g, q, 0.9);
  const auto out = apply_Pi(in, V, W, 0.7);
  for (int i = 0; i < g.n; ++i) {
    const double a = out.values()[i];
    const double b = out.values()[g.n - 1 - i];
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("apply_Pi flags a grid that misses the effective minimum") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::zero(1);
  const GridSpec g{2.0, 10.0, 401};
  CHECK_THROWS_AS(apply_Pi(GridDensity::uniform(g), V, W, 0.5),
                  GridCoverageError);
}

TEST_CASE("fixed point: no interaction converges in one full step") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::zero(1);
  FixedPointConfig fc;
  fc.sigma = 1.0;
  fc.damping = 1.0;
  fc.tol = 1e-9;
  fc.max_iter = 10;
  fc.grid = {-6.0, 6.0, 801};
  const auto [density, diag] = solve_fixed_point(V, W, fc);
  CHECK(diag.iterations <= 2);
  CHECK(diag.residuals.back() <= fc.tol);
  CHECK(density.variance() == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("fixed point: quadratic pair concentrates with effective curvature") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  FixedPointConfig fc;
  fc.sigma = 1.0;
  fc.damping = 0.5;
  fc.tol = 1e-9;
  fc.max_iter = 300;
  fc.grid = {-6.0, 6.0, 801};
  const auto [density, diag] = solve_fixed_point(V, W, fc);
  // variance sigma^2 / (2 (rho + alpha)) = 0.25
  CHECK(density.variance() == doctest::Approx(0.25).epsilon(0.01));
  CHECK_FALSE(diag.damping_warning);

  // The returned density is a fixed point within tol in L1.
  const auto pi = apply_Pi(density, V, W, fc.sigma);
  double l1 = 0.0;
  const double h = fc.grid.step();
  for (int i = 0; i < fc.grid.n; ++i) {
    const double w = (i == 0 || i == fc.grid.n - 1) ? 0.5 * h : h;
    l1 += w * std::abs(pi.values()[i] - density.values()[i]);
  }
  CHECK(l1 <= fc.tol);
}

TEST_CASE("fixed point: non-convergence raises with the last residual") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  FixedPointConfig fc;
  fc.sigma = 1.0;
  fc.damping = 0.5;
  fc.tol = 1e-16;
  fc.max_iter = 3;
  fc.grid = {-6.0, 6.0, 501};
  try {
    solve_fixed_point(V, W, fc);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_residual > 0.0);
    CHECK(e.iterations == 3);
  }
}

TEST_CASE("fixed point: grid must cover the sigma-scaled core") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  FixedPointConfig fc;
  fc.sigma = 1.0;
  fc.grid = {-2.0, 2.0, 301};  // needs +/- 8/sqrt(2) = 5.66
  CHECK_THROWS_AS(solve_fixed_point(V, W, fc), ConfigError);
}

TEST_CASE("solutions concentrate at m as sigma decreases") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  FixedPointConfig fc;
  fc.damping = 0.5;
  fc.tol = 1e-9;
  fc.max_iter = 300;
  fc.grid = {-6.0, 6.0, 1601};
  const auto dirac = GridDensity::dirac(fc.grid, 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {1.0, 0.5, 0.25}) {
    fc.sigma = sigma;
    const auto [density, diag] = solve_fixed_point(V, W, fc);
    const double w2 = density_distance(density, dirac).w2;
    CHECK(w2 < prev);
    prev = w2;
  }
}

TEST_CASE("density distance: L1 and W2 basics") {
  const GridSpec g{-6.0, 6.0, 2001};
  const auto a = gaussian_on(g, 0.0, 0.5);
  CHECK(density_distance(a, a).l1 == 0.0);
  CHECK(density_distance(a, a).w2 == 0.0);

  const auto shifted = gaussian_on(g, 0.5, 0.5);
  CHECK(density_distance(a, shifted).w2 ==
        doctest::Approx(0.5).epsilon(2e-3));

  const auto wider = gaussian_on(g, 0.0, 0.6);
  CHECK(density_distance(a, wider).w2 == doctest::Approx(0.1).epsilon(1e-2));

  const GridSpec other{-6.0, 6.0, 1001};
  CHECK_THROWS_AS(density_distance(a, gaussian_on(other, 0.0, 0.5)),
                  UsageError);
}

TEST_SUITE_END();
