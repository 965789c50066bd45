#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sidlab/errors.hpp"
#include "sidlab/exit_lab.hpp"
#include "sidlab/sde.hpp"

using namespace sidlab;

namespace {

PotentialSpec quad1(double curvature = 1.0) {
  return PotentialSpec::quadratic({0.0}, curvature);
}

DomainSpec unit_interval() {
  return DomainSpec::interval(-1.0, 1.0, quad1(), quad1(), {0.0});
}

// Mean first-passage time of dX = -theta X dt + sigma dB out of (-b, b),
// started at 0:  T = (2/s^2) int_0^b e^{a y^2} (sqrt(pi)/(2 sqrt(a)))
// erf(sqrt(a) y) dy with a = theta / s^2. Simpson quadrature.
double mfpt_quadrature(double theta, double sigma, double b) {
  const double s2 = sigma * sigma;
  const double a = theta / s2;
  auto f = [&](double y) {
    return std::exp(a * y * y) * std::sqrt(3.14159265358979323846 / a) * 0.5 *
           std::erf(std::sqrt(a) * y);
  };
  const int n = 4000;  // even
  const double h = b / n;
  double acc = f(0.0) + f(b);
  for (int i = 1; i < n; ++i) acc += f(i * h) * ((i % 2) ? 4.0 : 2.0);
  return 2.0 / s2 * acc * h / 3.0;
}

SimConfig sim_config(Vec x0, double sigma, double dt, double t_end,
                     std::uint64_t seed, int stride = 1) {
  SimConfig c;
  c.sigma = sigma;
  c.dt = dt;
  c.t_end = t_end;
  c.x0 = std::move(x0);
  c.master_seed = seed;
  c.decimation_stride = stride;
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("exit_lab");

TEST_CASE("exit cost: symmetric quadratic interval") {
  const auto dom = unit_interval();
  const auto cost = exit_cost(dom);
  // V(1) + W(1) - V(0) = 1/2 + 1/2
  CHECK(cost.H == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_FALSE(cost.optimizer_disagreement);
}

TEST_CASE("exit cost: level sets are exact by construction") {
  const auto dom = DomainSpec::level_set(0.7, quad1(), quad1(), {0.0});
  CHECK(exit_cost(dom).H == 0.7);
  // Nested level sets order their costs.
  const auto inner = DomainSpec::level_set(0.4, quad1(), quad1(), {0.0});
  CHECK(exit_cost(inner).H < exit_cost(dom).H);
}

TEST_CASE("exit cost: anisotropic 2-D ball") {
  const auto V = PotentialSpec::quadratic_diag({0.0, 0.0}, {1.0, 4.0});
  const auto W = PotentialSpec::quadratic({0.0, 0.0}, 1.0);
  const auto dom = DomainSpec::ball({0.0, 0.0}, 1.0, V, W, {0.0, 0.0});
  const auto cost = exit_cost(dom);
  // (x1^2 + 4 x2^2)/2 + |x|^2/2 on the unit circle: min 1 at (+-1, 0)
  CHECK(cost.H == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(cost.optimizer_disagreement);
  CHECK(std::abs(cost.optimizer_min - cost.sample_min) <= 1e-6);
}

TEST_CASE("domain constructors reject m outside") {
  CHECK_THROWS_AS(DomainSpec::interval(-1.0, 1.0, quad1(), quad1(), {2.0}),
                  UsageError);
  CHECK_THROWS_AS(
      DomainSpec::ball({5.0, 0.0}, 1.0,
                       PotentialSpec::quadratic({0.0, 0.0}, 1.0),
                       PotentialSpec::quadratic({0.0, 0.0}, 1.0), {0.0, 0.0}),
      UsageError);
  // Uncentered interaction potentials are rejected outright.
  CHECK_THROWS_AS(DomainSpec::interval(-1.0, 1.0, quad1(),
                                       PotentialSpec::quadratic({0.3}, 1.0),
                                       {0.0}),
                  UsageError);
}

TEST_CASE("enlarge/contract: level pair and sampled gaps") {
  const auto dom = unit_interval();
  const auto ec = enlarge_contract(dom, 0.2);
  CHECK(ec.enlarged.level() == doctest::Approx(1.1).epsilon(1e-14));
  CHECK(ec.contracted.level() == doctest::Approx(0.9).epsilon(1e-14));
  // W_m(x) = x^2, so the contracted boundary sits at +-sqrt(0.9).
  const auto bc = ec.contracted.boundary_samples(2);
  REQUIRE(bc.size() == 2);
  const double r = std::sqrt(0.9);
  CHECK(std::abs(std::abs(bc[0][0]) - r) <= 1e-9);
  CHECK(std::abs(std::abs(bc[1][0]) - r) <= 1e-9);
  CHECK(ec.d_e > 0.0);
  CHECK(ec.d_c > 0.0);

  const auto tiny = enlarge_contract(dom, 1e-9);
  CHECK(tiny.enlarged.level() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(tiny.contracted.level() == doctest::Approx(1.0).epsilon(1e-8));

  CHECK_THROWS_AS(enlarge_contract(dom, 2.2), UsageError);
}

TEST_CASE("first exit: degenerate start is flagged") {
  const auto dom = unit_interval();
  FrozenSimulator sim(quad1(), quad1(), {0.0},
                      sim_config({2.0}, 0.5, 1e-3, 10.0, 1), 0);
  const auto rec = first_exit(sim, dom, 10.0);
  CHECK(rec.degenerate_start);
  CHECK(rec.tau == 0.0);
  CHECK(rec.steps == 0);
}

TEST_CASE("first exit: zero noise from inside times out") {
  const auto dom = unit_interval();
  SelfInteractingSimulator sim(quad1(), quad1(),
                               sim_config({0.5}, 0.0, 1e-3, 10.0, 1), 0);
  const auto rec = first_exit(sim, dom, 5.0);
  CHECK(rec.timed_out);
  CHECK(rec.tau >= 5.0 - 1e-9);
}

TEST_CASE("first exit: frozen OU median matches the MFPT quadrature scale") {
  const auto dom = unit_interval();
  const double sigma = 0.8;
  const double t_max = 200.0;
  std::vector<double> taus;
  for (int r = 0; r < 200; ++r) {
    FrozenSimulator sim(quad1(), quad1(), {0.0},
                        sim_config({0.0}, sigma, 1e-3, t_max + 1.0, 77, 50), r);
    const auto rec = first_exit(sim, dom, t_max);
    REQUIRE_FALSE(rec.timed_out);
    taus.push_back(rec.tau);
  }
  std::sort(taus.begin(), taus.end());
  const double median = 0.5 * (taus[99] + taus[100]);
  const double T = mfpt_quadrature(2.0, sigma, 1.0);
  INFO("median " << median << " vs quadrature MFPT " << T);
  CHECK(median >= T / 3.0);
  CHECK(median <= T * 3.0);
}

TEST_CASE("first exit on a level set lands on the level") {
  const auto dom = DomainSpec::level_set(0.9, quad1(), quad1(), {0.0});
  for (int r = 0; r < 5; ++r) {
    FrozenSimulator sim(quad1(), quad1(), {0.0},
                        sim_config({0.0}, 0.8, 1e-3, 100.0, 3, 10), r);
    const auto rec = first_exit(sim, dom, 99.0);
    REQUIRE_FALSE(rec.timed_out);
    CHECK(std::abs(dom.excess_cost(rec.exit_point) - 0.9) <= 1e-9);
  }
}

TEST_CASE("domain assumption checks pass for the quadratic interval") {
  const auto dom = unit_interval();
  DomainCheckOptions opts;
  opts.horizon = 10.0;
  const auto rep = check_domain_assumptions(dom, {0.5}, opts);
  CHECK(rep.flow_from_x0_ok);
  CHECK(rep.invariance_ok);
  CHECK(rep.frozen_limit_ok);
  CHECK(rep.all_pass());
}

TEST_CASE("kramers sweep refuses a horizon too short for the flow checks") {
  const auto dom = unit_interval();
  KramersOptions opts;
  opts.sigmas = {0.9};
  opts.replicas = 5;
  opts.master_seed = 1;
  opts.domain_check.horizon = 0.05;  // frozen flows cannot reach m
  CHECK_THROWS_AS(kramers_sweep(dom, opts), ConfigError);
}

TEST_CASE("kramers sweep validates windows and budget up front") {
  const auto dom = unit_interval();
  KramersOptions opts;
  opts.sigmas = {0.9, 0.8};
  opts.replicas = 5;
  opts.master_seed = 1;
  opts.step_budget = 10.0;  // absurdly small
  CHECK_THROWS_AS(kramers_sweep(dom, opts), BudgetError);

  KramersOptions narrow;
  narrow.sigmas = {0.9};
  narrow.replicas = 5;
  narrow.t_max_policy.factor = 0.5;  // t_max below the window top
  CHECK_THROWS_AS(kramers_sweep(dom, narrow), ConfigError);

  KramersOptions increasing;
  increasing.sigmas = {0.8, 0.9};
  CHECK_THROWS_AS(kramers_sweep(dom, increasing), UsageError);
}

TEST_CASE("kramers sweep: small quadratic run produces coherent rows") {
  const auto dom = unit_interval();
  KramersOptions opts;
  opts.sigmas = {0.9, 0.8};
  opts.replicas = 40;
  opts.master_seed = 2026;
  opts.delta = 0.4;
  const auto res = kramers_sweep(dom, opts);
  CHECK(res.H == doctest::Approx(1.0));
  REQUIRE(res.rows.size() == 2);
  for (const auto& row : res.rows) {
    CHECK(row.usable);
    CHECK(row.timed_out_count == 0);
    CHECK(row.q10 <= row.median_tau);
    CHECK(row.median_tau <= row.q90);
    CHECK(row.in_window_fraction >= 0.0);
    CHECK(row.in_window_fraction <= 1.0);
    CHECK(row.rate == doctest::Approx(0.5 * row.sigma * row.sigma *
                                      std::log(row.median_tau)));
  }
  CHECK(res.records.size() == 80);
  // Exits of the symmetric interval land on both endpoints.
  int left = 0, right = 0;
  for (const auto& rec : res.records) {
    if (rec.exit_point[0] < 0) ++left;
    else ++right;
  }
  CHECK(left > 0);
  CHECK(right > 0);
}

TEST_CASE("exit location stats: symmetric case never hits a costlier arc") {
  const auto dom = unit_interval();
  KramersOptions opts;
  opts.sigmas = {0.9, 0.8};
  opts.replicas = 30;
  opts.master_seed = 4;
  const auto res = kramers_sweep(dom, opts);

  const auto rep = exit_location_stats(res.records, dom, 0.5);
  REQUIRE(rep.rows.size() == 2);
  // Both endpoints realize the infimum H, so N with margin 0.5 is empty.
  for (const auto& row : rep.rows) CHECK(row.frac_in_n == 0.0);
  CHECK(rep.n_fraction_monotone);

  // margin 0: every exit is at cost >= H, so the fraction is 1.
  const auto all = exit_location_stats(res.records, dom, 0.0);
  for (const auto& row : all.rows) CHECK(row.frac_in_n == 1.0);

  const auto never = exit_location_stats(
      res.records, dom, std::numeric_limits<double>::infinity());
  for (const auto& row : never.rows) CHECK(row.frac_in_n == 0.0);

  CHECK_THROWS_AS(exit_location_stats({}, dom, 0.5), UsageError);
}

TEST_SUITE_END();
