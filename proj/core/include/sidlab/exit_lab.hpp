#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sidlab/potentials.hpp"
#include "sidlab/sde.hpp"
#include "sidlab/vec.hpp"

namespace sidlab {

enum class DomainKind { Interval, Ball, LevelSet };

/// An open exit domain together with the potentials defining the effective
/// potential W_m(x) = V(x) + W(x - m). The attractor m must lie strictly
/// inside. Level-set domains are {x : W_m(x) - V(m) < L}.
class DomainSpec {
 public:
  static DomainSpec interval(double lo, double hi, PotentialSpec V,
                             PotentialSpec W, Vec m);
  static DomainSpec ball(Vec center, double radius, PotentialSpec V,
                         PotentialSpec W, Vec m);
  static DomainSpec level_set(double level, PotentialSpec V, PotentialSpec W,
                              Vec m);

  DomainKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(m_.size()); }
  const PotentialSpec& V() const { return V_; }
  const PotentialSpec& W() const { return W_; }
  const Vec& m() const { return m_; }
  double level() const { return level_; }
  double interval_lo() const { return lo_; }
  double interval_hi() const { return hi_; }
  const Vec& ball_center() const { return center_; }
  double ball_radius() const { return radius_; }

  bool contains(std::span<const double> x) const {
    return level_function(x) < 0.0;
  }
  /// Continuous indicator: negative inside, zero on the boundary.
  double level_function(std::span<const double> x) const;
  /// V(x) + W(x - m) - V(m); the boundary infimum of this is the exit-cost.
  double excess_cost(std::span<const double> x) const;
  /// Quasi-uniform points on the boundary (exact for intervals and balls,
  /// radial root-finding for level sets).
  std::vector<Vec> boundary_samples(int count) const;

 private:
  DomainSpec(DomainKind kind, PotentialSpec V, PotentialSpec W, Vec m);

  DomainKind kind_;
  PotentialSpec V_, W_;
  Vec m_;
  double lo_ = 0.0, hi_ = 0.0;  // interval
  Vec center_;                  // ball
  double radius_ = 0.0;
  double level_ = 0.0;          // level set
};

struct ExitCost {
  double H = 0.0;
  bool optimizer_disagreement = false;
  double optimizer_min = 0.0;
  double sample_min = 0.0;
};

/// inf over the boundary of the excess cost. Level sets are exact by
/// construction; balls use multi-start projected gradient descent
/// cross-checked against quasi-uniform sphere samples.
ExitCost exit_cost(const DomainSpec& domain);

struct EnlargeContract {
  DomainSpec enlarged;
  DomainSpec contracted;
  double d_e = 0.0;  // sampled min distance between bd(D) and bd(De)
  double d_c = 0.0;  // sampled min distance between bd(Dc) and bd(D)
};

/// Level-set domains at exit-cost H +/- delta/2. Throws UsageError when the
/// contraction would be empty (H - delta/2 <= 0).
EnlargeContract enlarge_contract(const DomainSpec& domain, double delta);

struct ExitRecord {
  int replica = 0;
  double sigma = 0.0;
  double tau = 0.0;
  Vec exit_point;
  bool timed_out = false;
  bool degenerate_start = false;
  long long steps = 0;
};

/// Steps the simulator to the first membership violation; tau and the exit
/// point are interpolated within the crossing step by bisection on the
/// level function.
template <class Sim>
ExitRecord first_exit(Sim& sim, const DomainSpec& domain, double t_max) {
  ExitRecord rec;
  rec.exit_point.assign(sim.x().begin(), sim.x().end());
  if (!domain.contains(sim.x())) {
    rec.degenerate_start = true;
    return rec;
  }
  const auto d = sim.x().size();
  Vec prev(sim.x().begin(), sim.x().end());
  Vec mid(d);
  double prev_t = sim.t();
  while (sim.t() < t_max - 1e-12) {
    sim.step();
    ++rec.steps;
    if (!domain.contains(sim.x())) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double th = 0.5 * (lo + hi);
        for (std::size_t i = 0; i < d; ++i)
          mid[i] = prev[i] + th * (sim.x()[i] - prev[i]);
        (domain.level_function(mid) < 0.0 ? lo : hi) = th;
      }
      for (std::size_t i = 0; i < d; ++i)
        mid[i] = prev[i] + hi * (sim.x()[i] - prev[i]);
      rec.tau = prev_t + hi * sim.dt();
      rec.exit_point = std::move(mid);
      return rec;
    }
    prev.assign(sim.x().begin(), sim.x().end());
    prev_t = sim.t();
  }
  rec.timed_out = true;
  rec.tau = sim.t();
  rec.exit_point.assign(sim.x().begin(), sim.x().end());
  return rec;
}

struct DtPolicy {
  double cap = 1e-3;
  double sigma_divisor = 100.0;
  double operator()(double sigma) const {
    return std::min(cap, sigma * sigma / sigma_divisor);
  }
};

struct TmaxPolicy {
  double factor = 3.0;
  double operator()(double sigma, double H, double delta) const {
    return factor * std::exp(2.0 * (H + delta) / (sigma * sigma));
  }
};

struct DomainCheckOptions {
  double horizon = 20.0;
  double dt = 1e-3;
  int boundary_count = 16;
  double proximity_tol = 1e-2;
  double interior_shrink = 0.99;
};

/// Numeric check of the standing domain hypotheses over a finite horizon:
/// the memory flow from x0 stays inside and contracts monotonically toward
/// m (its distance decays only polynomially, so proximity alone would need
/// huge horizons); the frozen field is positively invariant from
/// near-boundary starts; frozen flows from the boundary converge to m.
struct DomainCheckReport {
  bool flow_from_x0_ok = false;
  bool invariance_ok = false;
  bool frozen_limit_ok = false;
  double flow_initial_distance = 0.0;
  double flow_terminal_distance = 0.0;
  double max_frozen_terminal_distance = 0.0;
  double horizon = 0.0;
  bool all_pass() const {
    return flow_from_x0_ok && invariance_ok && frozen_limit_ok;
  }
};

DomainCheckReport check_domain_assumptions(const DomainSpec& domain,
                                           const Vec& x0,
                                           const DomainCheckOptions& opts = {});

struct KramersRow {
  double sigma = 0.0;
  int replicas = 0;
  double dt = 0.0;
  double t_max = 0.0;
  double median_tau = 0.0;
  double mean_tau = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
  double rate = 0.0;  // (sigma^2/2) log(median tau)
  double H = 0.0;
  double window_delta = 0.0;
  double in_window_fraction = 0.0;
  int timed_out_count = 0;
  bool usable = true;
  // Per-run diagnostics: worst in-block path length of the decimated
  // buffers (bounds the drift decimation error via Lip(grad W)), and for
  // level-set domains the worst |excess(exit) - level| over the exits.
  double max_block_displacement = 0.0;
  double max_boundary_residual = 0.0;
};

struct KramersResult {
  double H = 0.0;
  double delta = 0.0;
  std::vector<KramersRow> rows;
  std::vector<ExitRecord> records;
  bool window_fraction_monotone = false;
  DomainCheckReport domain_check;
};

struct KramersOptions {
  std::vector<double> sigmas;  // strictly decreasing
  int replicas = 100;
  DtPolicy dt_policy;
  TmaxPolicy t_max_policy;
  double delta = 0.4;
  Vec x0;  // empty -> start at m
  std::uint64_t master_seed = 0;
  int workers = 1;
  double step_budget = 1e10;
  double buffer_cap = 1e5;
  int warmup_steps = 1;
  DomainCheckOptions domain_check;
};

/// First-exit sweep of the self-interacting diffusion over a decreasing
/// sigma grid. Refuses to start when the domain checks fail, when a row's
/// t_max cannot contain the exit window, or when the worst-case Euler step
/// count exceeds the budget.
KramersResult kramers_sweep(const DomainSpec& domain,
                            const KramersOptions& options);

struct LocationRow {
  double sigma = 0.0;
  int exits = 0;
  double frac_in_n = 0.0;
};

struct LocationBin {
  double sigma = 0.0;
  double cost_lo = 0.0;
  double cost_hi = 0.0;
  int count = 0;
};

struct LocationReport {
  double H = 0.0;
  double margin = 0.0;
  std::vector<LocationRow> rows;        // per sigma, sweep order
  std::vector<LocationBin> histogram;   // boundary cost at exit
  bool n_fraction_monotone = false;
};

/// Per-sigma fraction of exits landing in N = {z on the boundary with
/// excess cost >= H + margin}, plus a histogram of the boundary cost at
/// the recorded exit points.
LocationReport exit_location_stats(const std::vector<ExitRecord>& records,
                                   const DomainSpec& domain, double margin);

}  // namespace sidlab
