#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sidlab/errors.hpp"
#include "sidlab/occupation.hpp"
#include "sidlab/sde.hpp"

using namespace sidlab;

namespace {

OccupationMeasure make_1d(std::vector<double> xs, std::vector<double> ws) {
  return OccupationMeasure(std::move(xs), std::move(ws), 1);
}

// Minimum cost over all pairings of equal-weight atoms, the brute-force
// oracle for the quantile coupling.
double brute_force_w2k(std::vector<double> a, std::vector<double> b, int k) {
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::sort(perm.begin(), perm.end());
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      cost += pow_int(a[i] - b[perm[i]], 2 * k) / a.size();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best, 1.0 / (2 * k));
}

std::mt19937_64 rng(777);

}  // namespace

TEST_SUITE_BEGIN("occupation");

TEST_CASE("central moment basics") {
  const auto single = make_1d({0.4}, {2.0});
  const Vec c{0.4};
  CHECK(central_moment(single, c, 2) == 0.0);

  const auto pm = make_1d({-1.0, 1.0}, {1.0, 1.0});
  const Vec zero{0.0};
  CHECK(central_moment(pm, zero, 2) == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(central_moment(pm, zero, 3), UsageError);
  CHECK_THROWS_AS(central_moment(pm, zero, 0), UsageError);
}

TEST_CASE("central moment matches a direct sum") {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> wgen(0.1, 3.0);
  std::vector<double> xs(5), ws(5);
  for (int i = 0; i < 5; ++i) {
    xs[i] = u(rng);
    ws[i] = wgen(rng);
  }
  const auto mu = make_1d(xs, ws);
  const Vec c{0.3};
  double expect = 0.0, wtot = 0.0;
  for (int i = 0; i < 5; ++i) {
    expect += ws[i] * pow_int(xs[i] - 0.3, 4);
    wtot += ws[i];
  }
  expect /= wtot;
  CHECK(central_moment(mu, c, 4) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("w2k to a Dirac reduces exactly to the moment formula") {
  const Vec m{0.5};
  const auto dirac = make_1d({0.5}, {1.0});
  CHECK(w2k_to_dirac(dirac, m, 1) == 0.0);

  const auto pm = make_1d({-0.5, 1.5}, {1.0, 1.0});
  CHECK(w2k_to_dirac(pm, m, 1) == doctest::Approx(1.0).epsilon(1e-15));

  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> xs(10), ws(10, 1.0);
  for (auto& x : xs) x = u(rng);
  const auto mu = make_1d(xs, ws);
  const double d = w2k_to_dirac(mu, m, 2);
  const double moment = central_moment(mu, m, 4);
  CHECK(pow_int(d, 4) == doctest::Approx(moment).epsilon(1e-14));
}

TEST_CASE("1-D W2k: identical measures and two Diracs") {
  const auto a = make_1d({0.0, 1.0, 2.0}, {1.0, 2.0, 1.0});
  CHECK(w2k_empirical_1d(a, a, 1) == doctest::Approx(0.0).epsilon(1e-15));
  const auto p = make_1d({0.0}, {1.0});
  const auto q = make_1d({3.0}, {2.0});
  CHECK(w2k_empirical_1d(p, q, 1) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK_THROWS_AS(
      w2k_empirical_1d(OccupationMeasure({0.0, 0.0}, {1.0}, 2), p, 1),
      UsageError);
}

TEST_CASE("1-D W2k agrees with the permutation brute force") {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k : {1, 2}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> xs(5), ys(5);
      for (auto& v : xs) v = u(rng);
      for (auto& v : ys) v = u(rng);
      std::vector<double> xs_sorted = xs;
      std::sort(xs_sorted.begin(), xs_sorted.end());
      const double got = w2k_empirical_1d(make_1d(xs, {1, 1, 1, 1, 1}),
                                          make_1d(ys, {1, 1, 1, 1, 1}), k);
      const double want = brute_force_w2k(xs_sorted, ys, k);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("1-D W2k triangle inequality on random weighted triples") {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> wgen(0.25, 2.0);
  auto gen = [&](int n) {
    std::vector<double> xs(n), ws(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = u(rng);
      ws[i] = wgen(rng);
    }
    return make_1d(xs, ws);
  };
  for (int k : {1, 2}) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto a = gen(4), b = gen(6), c = gen(5);
      const double ab = w2k_empirical_1d(a, b, k);
      const double bc = w2k_empirical_1d(b, c, k);
      const double ac = w2k_empirical_1d(a, c, k);
      CHECK(ac <= ab + bc + 1e-10);
    }
  }
}

TEST_CASE("1-D W2k scales linearly under dilation about 0") {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> xs(6), ys(4), wx(6, 1.0), wy(4, 1.0);
  for (auto& v : xs) v = u(rng);
  for (auto& v : ys) v = u(rng);
  const double base =
      w2k_empirical_1d(make_1d(xs, wx), make_1d(ys, wy), 1);
  for (double cscale : {0.5, -2.0, 3.25}) {
    auto sx = xs, sy = ys;
    for (auto& v : sx) v *= cscale;
    for (auto& v : sy) v *= cscale;
    const double scaled =
        w2k_empirical_1d(make_1d(sx, wx), make_1d(sy, wy), 1);
    CHECK(scaled == doctest::Approx(std::abs(cscale) * base).epsilon(1e-12));
  }
}

TEST_CASE("sliced W2: zero on equal measures, bounded by translations") {
  std::vector<double> pts{0.2, 0.4, -0.3, 0.9, 1.2, -0.7};
  const OccupationMeasure mu(pts, {1, 1, 1}, 2);
  CHECK(sliced_w2(mu, mu, 32, 5) == doctest::Approx(0.0).epsilon(1e-15));

  const Vec v{0.6, -0.8};
  auto shifted = pts;
  for (int i = 0; i < 3; ++i) {
    shifted[2 * i] += v[0];
    shifted[2 * i + 1] += v[1];
  }
  const OccupationMeasure nu(shifted, {1, 1, 1}, 2);
  const double d = sliced_w2(mu, nu, 64, 5);
  CHECK(d <= norm(v) + 1e-12);
  CHECK(d > 0.0);

  CHECK(sliced_w2(mu, nu, 64, 5) == d);  // deterministic given the seed
  CHECK_THROWS_AS(sliced_w2(mu, nu, 0, 5), UsageError);
  const auto one_d = make_1d({0.0}, {1.0});
  CHECK_THROWS_AS(sliced_w2(one_d, one_d, 8, 5), UsageError);
}

TEST_CASE("sliced W2 stabilizes as projections double") {
  std::mt19937_64 local(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(6), b(6);
  for (auto& v : a) v = u(local);
  for (auto& v : b) v = u(local);
  const OccupationMeasure mu(a, {1, 1, 1}, 2);
  const OccupationMeasure nu(b, {1, 1, 1}, 2);
  // Doubling differences |S(2P) - S(P)| at large P fall below those at
  // small P: the estimate settles as the projection count grows.
  for (std::uint64_t seed : {9ull, 1ull, 2ull, 3ull}) {
    std::vector<double> diffs;
    double prev = sliced_w2(mu, nu, 64, seed);
    for (int p = 128; p <= 16384; p *= 2) {
      const double cur = sliced_w2(mu, nu, p, seed);
      diffs.push_back(std::abs(cur - prev));
      prev = cur;
    }
    const double early = std::max(diffs[0], diffs[1]);
    const double late = std::max(diffs[diffs.size() - 1], diffs[diffs.size() - 2]);
    CHECK(late <= early + 1e-12);
  }
}

TEST_CASE("tail profile: masses and degenerate flag") {
  const auto inside = make_1d({0.1, -0.2, 0.05}, {1.0, 1.0, 1.0});
  const Vec zero{0.0};
  const auto prof = tail_profile(inside, zero, {1.0, 2.0, 3.0});
  for (double m : prof.tail_mass) CHECK(m == 0.0);
  CHECK(prof.degenerate);

  const auto two = make_1d({0.0, 5.0}, {0.9, 0.1});
  const auto p2 = tail_profile(two, zero, {1.0, 2.0, 3.0});
  for (double m : p2.tail_mass) CHECK(m == doctest::Approx(0.1).epsilon(1e-15));

  CHECK_THROWS_AS(tail_profile(two, zero, {2.0, 1.0}), UsageError);
  CHECK_THROWS_AS(tail_profile(two, zero, {}), UsageError);
}

TEST_CASE("tail profile of a long quadratic trajectory fits an exponential") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SimConfig cfg;
  cfg.sigma = 1.0;
  cfg.dt = 1e-3;
  cfg.t_end = 500.0;
  cfg.x0 = {0.0};
  cfg.master_seed = 31;
  cfg.decimation_stride = 5;
  const auto traj = simulate_self_interacting(V, W, cfg, 0);
  const auto mu = OccupationMeasure::from_buffer(traj.state.buffer());
  const double s = cfg.sigma / 2.0;  // stationary scale sigma/sqrt(2(rho+alpha))
  std::vector<double> radii;
  for (double c = 1.0; c <= 2.81; c += 0.3) radii.push_back(c * s);
  const Vec m{0.0};
  const auto prof = tail_profile(mu, m, radii);
  CHECK_FALSE(prof.degenerate);
  CHECK(prof.a > 0.0);
  CHECK(prof.r_squared >= 0.9);
  for (std::size_t i = 1; i < prof.tail_mass.size(); ++i)
    CHECK(prof.tail_mass[i] <= prof.tail_mass[i - 1]);
}

TEST_CASE("stabilisation: generous kappa from the attractor stabilises at once") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SimConfig cfg;
  cfg.sigma = 1e-4;
  cfg.dt = 1e-3;
  cfg.t_end = 1.5;
  cfg.x0 = {0.0};
  cfg.master_seed = 7;
  const auto est =
      estimate_stabilisation_time(V, W, cfg, 0.1, 30, {0.5, 1.0}, 2, 1);
  CHECK(est.stabilised);
  CHECK(est.t_hat == 0.5);
}

TEST_CASE("stabilisation: kappa = 0 never stabilises") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SimConfig cfg;
  cfg.sigma = 0.5;
  cfg.dt = 1e-3;
  cfg.t_end = 2.0;
  cfg.x0 = {0.0};
  cfg.master_seed = 7;
  const auto est =
      estimate_stabilisation_time(V, W, cfg, 0.0, 30, {0.5, 1.0, 2.0}, 2, 1);
  CHECK_FALSE(est.stabilised);
  CHECK(std::isinf(est.t_hat));
  CHECK(est.trailing_mean > 0.0);
}

TEST_CASE("stabilisation: t_hat is monotone in kappa on the same replicas") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SimConfig cfg;
  cfg.sigma = 0.5;
  cfg.dt = 2e-3;
  cfg.t_end = 25.0;
  cfg.x0 = {0.5};
  cfg.master_seed = 13;
  cfg.decimation_stride = 2;
  std::vector<double> cps;
  for (double t = 1.0; t <= 25.0; t += 1.0) cps.push_back(t);
  const auto loose =
      estimate_stabilisation_time(V, W, cfg, 0.45, 30, cps, 2, 1);
  const auto tight =
      estimate_stabilisation_time(V, W, cfg, 0.35, 30, cps, 2, 1);
  REQUIRE(loose.stabilised);
  REQUIRE(tight.stabilised);
  CHECK(tight.t_hat >= loose.t_hat);
  // Means at a given checkpoint do not depend on kappa.
  CHECK(loose.mean_dist == tight.mean_dist);
}

TEST_CASE("stabilisation: smaller sigma stabilises no later (with slack)") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SimConfig cfg;
  cfg.dt = 2e-3;
  cfg.t_end = 30.0;
  cfg.x0 = {0.5};
  cfg.master_seed = 17;
  cfg.decimation_stride = 2;
  std::vector<double> cps;
  for (double t = 1.0; t <= 30.0; t += 1.0) cps.push_back(t);
  cfg.sigma = 0.5;
  const auto big = estimate_stabilisation_time(V, W, cfg, 0.3, 40, cps, 2, 1);
  cfg.sigma = 0.3;
  const auto small = estimate_stabilisation_time(V, W, cfg, 0.3, 40, cps, 2, 1);
  REQUIRE(big.stabilised);
  REQUIRE(small.stabilised);
  CHECK(small.t_hat <= big.t_hat * 1.25);
}

TEST_CASE("stabilisation input validation") {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SimConfig cfg;
  cfg.sigma = 0.5;
  cfg.dt = 1e-2;
  cfg.t_end = 2.0;
  cfg.x0 = {0.0};
  CHECK_THROWS_AS(
      estimate_stabilisation_time(V, W, cfg, 0.1, 10, {1.0}, 2, 1),
      UsageError);
  CHECK_THROWS_AS(
      estimate_stabilisation_time(V, W, cfg, 0.1, 30, {1.0, 0.5}, 2, 1),
      UsageError);
  CHECK_THROWS_AS(
      estimate_stabilisation_time(V, W, cfg, 0.1, 30, {1.0, 5.0}, 2, 1),
      ConfigError);
}

TEST_CASE("occupation measure validation") {
  CHECK_THROWS_AS(OccupationMeasure({}, {}, 1), UsageError);
  CHECK_THROWS_AS(OccupationMeasure({1.0}, {0.0}, 1), UsageError);
  CHECK_THROWS_AS(OccupationMeasure({1.0}, {-1.0}, 1), UsageError);
  CHECK_THROWS_AS(OccupationMeasure({1.0, 2.0, 3.0}, {1.0}, 2), UsageError);
  const OccupationMeasure ok({1.0, 2.0}, {1.0}, 2);
  CHECK(ok.size() == 1);
}

TEST_SUITE_END();
