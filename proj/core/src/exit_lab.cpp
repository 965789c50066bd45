#include "sidlab/exit_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sidlab/errors.hpp"
#include "sidlab/parallel.hpp"
#include "sidlab/seeding.hpp"

namespace sidlab {

DomainSpec::DomainSpec(DomainKind kind, PotentialSpec V, PotentialSpec W,
                       Vec m)
    : kind_(kind), V_(std::move(V)), W_(std::move(W)), m_(std::move(m)) {
  const int d = static_cast<int>(m_.size());
  if (d < 1 || d > kMaxDim) throw UsageError("DomainSpec: bad dimension");
  if (V_.dimension() != d || W_.dimension() != d)
    throw UsageError("DomainSpec: potential dimension mismatch");
  if (!all_finite(m_)) throw DomainError("DomainSpec: m not finite");
  if (norm(W_.minimizer()) > 1e-12)
    throw UsageError("DomainSpec: interaction potential must be minimized at 0");
}

DomainSpec DomainSpec::interval(double lo, double hi, PotentialSpec V,
                                PotentialSpec W, Vec m) {
  if (m.size() != 1) throw UsageError("interval domain is 1-D");
  DomainSpec s(DomainKind::Interval, std::move(V), std::move(W), std::move(m));
  if (!(lo < hi)) throw UsageError("interval: lo must be < hi");
  s.lo_ = lo;
  s.hi_ = hi;
  if (!(lo < s.m_[0] && s.m_[0] < hi))
    throw UsageError("interval: m must lie strictly inside");
  return s;
}

DomainSpec DomainSpec::ball(Vec center, double radius, PotentialSpec V,
                            PotentialSpec W, Vec m) {
  if (center.size() != m.size()) throw UsageError("ball: center/m dimension mismatch");
  DomainSpec s(DomainKind::Ball, std::move(V), std::move(W), std::move(m));
  if (!(radius > 0.0)) throw UsageError("ball: radius must be positive");
  s.center_ = std::move(center);
  s.radius_ = radius;
  if (!(dist(s.center_, s.m_) < radius))
    throw UsageError("ball: m must lie strictly inside");
  return s;
}

DomainSpec DomainSpec::level_set(double level, PotentialSpec V,
                                 PotentialSpec W, Vec m) {
  DomainSpec s(DomainKind::LevelSet, std::move(V), std::move(W), std::move(m));
  if (!(level > 0.0)) throw UsageError("level_set: level must be positive");
  s.level_ = level;
  if (!(s.excess_cost(s.m_) < level))
    throw UsageError("level_set: m must lie strictly inside");
  return s;
}

double DomainSpec::excess_cost(std::span<const double> x) const {
  double diff[kMaxDim];
  const auto d = x.size();
  for (std::size_t i = 0; i < d; ++i) diff[i] = x[i] - m_[i];
  return V_.value(x) + W_.value({diff, d}) - V_.value(m_);
}

double DomainSpec::level_function(std::span<const double> x) const {
  switch (kind_) {
    case DomainKind::Interval:
      return std::max(lo_ - x[0], x[0] - hi_);
    case DomainKind::Ball:
      return dist(x, center_) - radius_;
    case DomainKind::LevelSet:
      return excess_cost(x) - level_;
  }
  return 0.0;
}

namespace {

// Deterministic quasi-uniform directions on the unit sphere.
std::vector<Vec> sphere_directions(int dim, int count) {
  std::vector<Vec> dirs;
  if (dim == 1) {
    dirs.push_back({-1.0});
    dirs.push_back({1.0});
    return dirs;
  }
  dirs.reserve(count);
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 2.0 * 3.14159265358979323846 * i / count;
      dirs.push_back({std::cos(th), std::sin(th)});
    }
    return dirs;
  }
  if (dim == 3) {
    // Fibonacci sphere
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - (2.0 * i + 1.0) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double th = 2.0 * 3.14159265358979323846 * i / golden;
      dirs.push_back({r * std::cos(th), r * std::sin(th), z});
    }
    return dirs;
  }
  std::uint64_t ctr = 0x5b0a11ce;
  for (int i = 0; i < count; ++i) {
    Vec v(dim);
    double n2 = 0.0;
    do {
      for (int j = 0; j < dim; ++j) v[j] = normal_from_u64(splitmix64(ctr++));
      n2 = norm_sq(v);
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (double& c : v) c *= inv;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

}  // namespace

std::vector<Vec> DomainSpec::boundary_samples(int count) const {
  if (count < 1) throw UsageError("boundary_samples: count must be >= 1");
  std::vector<Vec> out;
  switch (kind_) {
    case DomainKind::Interval:
      out.push_back({lo_});
      out.push_back({hi_});
      return out;
    case DomainKind::Ball: {
      const auto dirs = sphere_directions(dim(), count);
      out.reserve(dirs.size());
      for (const auto& u : dirs) {
        Vec p = center_;
        for (int i = 0; i < dim(); ++i) p[i] += radius_ * u[i];
        out.push_back(std::move(p));
      }
      return out;
    }
    case DomainKind::LevelSet: {
      // The excess cost is convex with minimum 0 at m, so each ray from m
      // crosses the level exactly once.
      const auto dirs = sphere_directions(dim(), count);
      out.reserve(dirs.size());
      Vec p(dim());
      for (const auto& u : dirs) {
        double r_hi = 1.0;
        int guard = 0;
        auto at = [&](double r) {
          for (int i = 0; i < dim(); ++i) p[i] = m_[i] + r * u[i];
          return excess_cost(p) - level_;
        };
        while (at(r_hi) < 0.0) {
          r_hi *= 2.0;
          if (++guard > 200) throw AccuracyError("level-set boundary not reached");
        }
        double r_lo = 0.0;
        for (int it = 0; it < 100; ++it) {
          const double rm = 0.5 * (r_lo + r_hi);
          (at(rm) < 0.0 ? r_lo : r_hi) = rm;
        }
        at(0.5 * (r_lo + r_hi));
        out.push_back(p);
      }
      return out;
    }
  }
  return out;
}

namespace {

double project_gd_min_on_sphere(const DomainSpec& dom, const Vec& start) {
  const int d = dom.dim();
  const Vec& c = dom.ball_center();
  const double R = dom.ball_radius();
  Vec x = start;
  Vec g(d), gt(d), trial(d);
  double fx = dom.excess_cost(x);
  for (int iter = 0; iter < 200; ++iter) {
    dom.V().gradient(x, g);
    {
      double diff[kMaxDim], gw[kMaxDim];
      for (int i = 0; i < d; ++i) diff[i] = x[i] - dom.m()[i];
      dom.W().gradient({diff, static_cast<std::size_t>(d)},
                       {gw, static_cast<std::size_t>(d)});
      for (int i = 0; i < d; ++i) g[i] += gw[i];
    }
    // tangential component
    double gn = 0.0;
    for (int i = 0; i < d; ++i) gn += g[i] * (x[i] - c[i]) / R;
    double gt2 = 0.0;
    for (int i = 0; i < d; ++i) {
      gt[i] = g[i] - gn * (x[i] - c[i]) / R;
      gt2 += gt[i] * gt[i];
    }
    if (gt2 <= 1e-10 * 1e-10) break;
    double step = R / (1.0 + std::sqrt(gt2));
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      double n2 = 0.0;
      for (int i = 0; i < d; ++i) {
        trial[i] = (x[i] - c[i]) - step * gt[i];
        n2 += trial[i] * trial[i];
      }
      const double inv = R / std::sqrt(n2);
      for (int i = 0; i < d; ++i) trial[i] = c[i] + trial[i] * inv;
      const double ft = dom.excess_cost(trial);
      if (ft < fx - 0.25 * step * gt2) {
        x = trial;
        fx = ft;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return fx;
}

}  // namespace

ExitCost exit_cost(const DomainSpec& domain) {
  ExitCost out;
  switch (domain.kind()) {
    case DomainKind::LevelSet:
      out.H = domain.level();
      out.optimizer_min = out.sample_min = out.H;
      return out;
    case DomainKind::Interval: {
      const Vec lo{domain.interval_lo()}, hi{domain.interval_hi()};
      out.H = std::min(domain.excess_cost(lo), domain.excess_cost(hi));
      out.optimizer_min = out.sample_min = out.H;
      return out;
    }
    case DomainKind::Ball: {
      if (domain.dim() == 1) {
        const Vec lo{domain.ball_center()[0] - domain.ball_radius()};
        const Vec hi{domain.ball_center()[0] + domain.ball_radius()};
        out.H = std::min(domain.excess_cost(lo), domain.excess_cost(hi));
        out.optimizer_min = out.sample_min = out.H;
        return out;
      }
      const auto starts = domain.boundary_samples(64);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : starts)
        best = std::min(best, project_gd_min_on_sphere(domain, s));
      const auto samples = domain.boundary_samples(10000);
      double smin = std::numeric_limits<double>::infinity();
      for (const auto& s : samples) smin = std::min(smin, domain.excess_cost(s));
      out.optimizer_min = best;
      out.sample_min = smin;
      out.optimizer_disagreement = std::abs(best - smin) > 1e-6;
      out.H = std::min(best, smin);
      return out;
    }
  }
  return out;
}

EnlargeContract enlarge_contract(const DomainSpec& domain, double delta) {
  if (!(delta > 0.0)) throw UsageError("enlarge_contract: delta must be > 0");
  const double H = exit_cost(domain).H;
  if (!(H - 0.5 * delta > 0.0))
    throw UsageError("enlarge_contract: contraction empty, decrease delta");
  DomainSpec enlarged = DomainSpec::level_set(H + 0.5 * delta, domain.V(),
                                              domain.W(), domain.m());
  DomainSpec contracted = DomainSpec::level_set(H - 0.5 * delta, domain.V(),
                                                domain.W(), domain.m());
  const int nb = domain.dim() == 1 ? 2 : 512;
  const auto bd = domain.boundary_samples(nb);
  const auto be = enlarged.boundary_samples(nb);
  const auto bc = contracted.boundary_samples(nb);
  auto min_gap = [](const std::vector<Vec>& a, const std::vector<Vec>& b) {
    double g = std::numeric_limits<double>::infinity();
    for (const auto& p : a)
      for (const auto& q : b) g = std::min(g, dist(p, q));
    return g;
  };
  EnlargeContract out{std::move(enlarged), std::move(contracted),
                      min_gap(bd, be), min_gap(bc, bd)};
  return out;
}

DomainCheckReport check_domain_assumptions(const DomainSpec& domain,
                                           const Vec& x0,
                                           const DomainCheckOptions& opts) {
  if (x0.size() != domain.m().size())
    throw UsageError("check_domain_assumptions: x0 dimension mismatch");
  DomainCheckReport rep;
  rep.horizon = opts.horizon;
  Membership inside = [&domain](std::span<const double> p) {
    return domain.contains(p);
  };
  // Refine only to the accuracy the proximity check needs.
  const double flow_tol = 0.1 * opts.proximity_tol;

  // (i) memory flow from x0 stays inside and approaches m. Its distance to
  // m decays polynomially, so accept either terminal proximity or a clear
  // monotone contraction over the horizon.
  const FlowPath flow = deterministic_flow(domain.V(), domain.W(), x0,
                                           opts.horizon, opts.dt, inside,
                                           flow_tol);
  rep.flow_initial_distance = dist(x0, domain.m());
  rep.flow_terminal_distance = dist(flow.terminal, domain.m());
  bool tail_monotone = true;
  const std::size_t tail_start = flow.samples.size() * 3 / 4;
  double prev_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = tail_start; i < flow.samples.size(); ++i) {
    const double d = dist(flow.samples[i].second, domain.m());
    if (d > prev_dist + 1e-12) tail_monotone = false;
    prev_dist = d;
  }
  const bool near_m = rep.flow_terminal_distance <= opts.proximity_tol;
  const bool contracting =
      rep.flow_terminal_distance <=
          std::max(opts.proximity_tol, 0.2 * rep.flow_initial_distance) &&
      tail_monotone;
  rep.flow_from_x0_ok = flow.stayed_in_domain && (near_m || contracting);

  // (ii) frozen field positively invariant from near-boundary interior
  // starts; (iii) frozen flows from the boundary converge to m.
  const auto boundary = domain.boundary_samples(opts.boundary_count);
  bool invariant = true;
  bool limits = true;
  double worst = 0.0;
  for (const auto& z : boundary) {
    Vec interior(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      interior[i] =
          domain.m()[i] + opts.interior_shrink * (z[i] - domain.m()[i]);
    const FlowPath inv =
        frozen_flow(domain.V(), domain.W(), domain.m(), interior, opts.horizon,
                    opts.dt, inside, flow_tol);
    invariant = invariant && inv.stayed_in_domain;
    const FlowPath lim = frozen_flow(domain.V(), domain.W(), domain.m(), z,
                                     opts.horizon, opts.dt, {}, flow_tol);
    worst = std::max(worst, lim.terminal_distance_to_m);
    limits = limits && lim.terminal_distance_to_m <= opts.proximity_tol;
  }
  rep.invariance_ok = invariant;
  rep.frozen_limit_ok = limits;
  rep.max_frozen_terminal_distance = worst;
  return rep;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (sorted.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - i;
  return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}

}  // namespace

KramersResult kramers_sweep(const DomainSpec& domain,
                            const KramersOptions& options) {
  const auto& sigmas = options.sigmas;
  if (sigmas.empty()) throw UsageError("kramers_sweep: empty sigma list");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw UsageError("kramers_sweep: sigmas must be > 0");
    if (i > 0 && !(sigmas[i] < sigmas[i - 1]))
      throw UsageError("kramers_sweep: sigmas must be strictly decreasing");
  }
  if (options.replicas < 1) throw UsageError("kramers_sweep: replicas must be >= 1");
  if (!(options.delta > 0.0)) throw UsageError("kramers_sweep: delta must be > 0");

  const Vec x0 = options.x0.empty() ? domain.m() : options.x0;
  if (!domain.contains(x0))
    throw ConfigError("kramers_sweep: start point is outside the domain");

  KramersResult result;
  result.H = exit_cost(domain).H;
  result.delta = options.delta;

  // The theorem's hypotheses are machine-checked before any sampling.
  result.domain_check = check_domain_assumptions(domain, x0, options.domain_check);
  if (!result.domain_check.all_pass())
    throw ConfigError("kramers_sweep: domain failed its assumption checks");

  // Budget and window feasibility, before any simulation.
  double worst_case_steps = 0.0;
  for (double s : sigmas) {
    const double dt = options.dt_policy(s);
    const double t_max = options.t_max_policy(s, result.H, options.delta);
    const double window_hi =
        std::exp(2.0 * (result.H + options.delta) / (s * s));
    if (!std::isfinite(t_max) || !std::isfinite(window_hi))
      throw ConfigError("kramers_sweep: sigma too small, exit window overflows");
    if (t_max < window_hi)
      throw ConfigError(
          "kramers_sweep: t_max below exp(2(H+delta)/sigma^2); window not observable");
    worst_case_steps += options.replicas * (t_max / dt);
  }
  if (worst_case_steps > options.step_budget)
    throw BudgetError("kramers_sweep: worst-case Euler steps exceed the budget");

  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    const double sigma = sigmas[si];
    const double dt = options.dt_policy(sigma);
    const double t_max = options.t_max_policy(sigma, result.H, options.delta);
    const auto stride = static_cast<int>(
        std::max(1.0, std::ceil(t_max / dt / options.buffer_cap)));

    SimConfig cfg;
    cfg.sigma = sigma;
    cfg.dt = dt;
    cfg.t_end = t_max + dt;
    cfg.x0 = x0;
    cfg.master_seed = derive_seed(options.master_seed, "kramers-row", si);
    cfg.decimation_stride = stride;
    cfg.warmup_steps = options.warmup_steps;

    std::vector<ExitRecord> recs(options.replicas);
    std::vector<double> block_disp(options.replicas, 0.0);
    parallel_for(options.replicas, options.workers, [&](std::size_t r) {
      SelfInteractingSimulator sim(domain.V(), domain.W(), cfg,
                                   static_cast<std::uint64_t>(r));
      sim.state().reserve_steps(
          static_cast<long long>(std::min(t_max / dt, options.buffer_cap)));
      ExitRecord rec = first_exit(sim, domain, t_max);
      rec.replica = static_cast<int>(r);
      rec.sigma = sigma;
      block_disp[r] = sim.state().max_block_displacement();
      recs[r] = std::move(rec);
    });

    KramersRow row;
    row.sigma = sigma;
    row.replicas = options.replicas;
    row.dt = dt;
    row.t_max = t_max;
    row.H = result.H;
    row.window_delta = options.delta;
    std::vector<double> taus;
    taus.reserve(recs.size());
    for (const auto& rec : recs) {
      taus.push_back(rec.tau);
      row.timed_out_count += rec.timed_out ? 1 : 0;
    }
    std::sort(taus.begin(), taus.end());
    row.median_tau = quantile_sorted(taus, 0.5);
    row.mean_tau = std::accumulate(taus.begin(), taus.end(), 0.0) / taus.size();
    row.q10 = quantile_sorted(taus, 0.10);
    row.q90 = quantile_sorted(taus, 0.90);
    row.rate = 0.5 * sigma * sigma * std::log(std::max(row.median_tau, 1e-300));
    const double win_lo = std::exp(2.0 * (result.H - options.delta) / (sigma * sigma));
    const double win_hi = std::exp(2.0 * (result.H + options.delta) / (sigma * sigma));
    int in_window = 0;
    for (const auto& rec : recs)
      if (!rec.timed_out && rec.tau >= win_lo && rec.tau <= win_hi) ++in_window;
    row.in_window_fraction = static_cast<double>(in_window) / recs.size();
    row.usable = 2 * row.timed_out_count <= options.replicas;

    result.rows.push_back(row);
    for (auto& rec : recs) result.records.push_back(std::move(rec));
  }

  result.window_fraction_monotone = true;
  for (std::size_t i = 1; i < result.rows.size(); ++i)
    if (result.rows[i].in_window_fraction <
        result.rows[i - 1].in_window_fraction - 1e-12)
      result.window_fraction_monotone = false;
  return result;
}

LocationReport exit_location_stats(const std::vector<ExitRecord>& records,
                                   const DomainSpec& domain, double margin) {
  if (records.empty()) throw UsageError("exit_location_stats: no records");
  if (!(margin >= 0.0)) throw UsageError("exit_location_stats: margin must be >= 0");
  LocationReport rep;
  rep.H = exit_cost(domain).H;
  rep.margin = margin;

  // Group by sigma in encounter (sweep) order.
  std::vector<double> sigma_order;
  for (const auto& r : records) {
    if (sigma_order.empty() || sigma_order.back() != r.sigma) {
      if (std::find(sigma_order.begin(), sigma_order.end(), r.sigma) ==
          sigma_order.end())
        sigma_order.push_back(r.sigma);
    }
  }

  double cost_min = std::numeric_limits<double>::infinity();
  double cost_max = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> exits;  // (sigma, cost)
  for (const auto& r : records) {
    if (r.timed_out || r.degenerate_start) continue;
    const double c = domain.excess_cost(r.exit_point);
    exits.emplace_back(r.sigma, c);
    cost_min = std::min(cost_min, c);
    cost_max = std::max(cost_max, c);
  }

  for (double s : sigma_order) {
    LocationRow row;
    row.sigma = s;
    int in_n = 0;
    for (const auto& [sig, c] : exits) {
      if (sig != s) continue;
      ++row.exits;
      if (c >= rep.H + margin) ++in_n;
    }
    row.frac_in_n = row.exits > 0 ? static_cast<double>(in_n) / row.exits : 0.0;
    rep.rows.push_back(row);
  }

  if (!exits.empty()) {
    const int nbins = 24;
    const double span = std::max(cost_max - cost_min, 1e-12);
    for (double s : sigma_order) {
      std::vector<int> counts(nbins, 0);
      for (const auto& [sig, c] : exits) {
        if (sig != s) continue;
        const int b = std::min(
            nbins - 1, static_cast<int>((c - cost_min) / span * nbins));
        ++counts[b];
      }
      for (int b = 0; b < nbins; ++b) {
        if (counts[b] == 0) continue;
        rep.histogram.push_back({s, cost_min + span * b / nbins,
                                 cost_min + span * (b + 1) / nbins, counts[b]});
      }
    }
  }

  rep.n_fraction_monotone = true;
  const LocationRow* prev = nullptr;
  for (const auto& row : rep.rows) {
    if (row.exits == 0) continue;
    if (prev && row.frac_in_n > prev->frac_in_n + 1e-12)
      rep.n_fraction_monotone = false;
    prev = &row;
  }
  return rep;
}

}  // namespace sidlab
