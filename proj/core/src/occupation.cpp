#include "sidlab/occupation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sidlab/errors.hpp"
#include "sidlab/parallel.hpp"
#include "sidlab/seeding.hpp"

namespace sidlab {

OccupationMeasure::OccupationMeasure(std::vector<double> points_rowmajor,
                                     std::vector<double> weights, int dim)
    : x_(std::move(points_rowmajor)), w_(std::move(weights)), dim_(dim) {
  if (dim_ < 1) throw UsageError("OccupationMeasure: dim must be >= 1");
  if (w_.empty()) throw UsageError("OccupationMeasure: no samples");
  if (x_.size() != w_.size() * static_cast<std::size_t>(dim_))
    throw UsageError("OccupationMeasure: points/weights size mismatch");
  if (!all_finite(x_)) throw UsageError("OccupationMeasure: non-finite point");
  KahanSum total;
  for (double w : w_) {
    if (!(w > 0.0) || !std::isfinite(w))
      throw UsageError("OccupationMeasure: weights must be positive and finite");
    total.add(w);
  }
  norm_ = total.value();
}

OccupationMeasure OccupationMeasure::from_buffer(const PathBuffer& buffer) {
  if (buffer.size() == 0) throw UsageError("from_buffer: empty path buffer");
  return OccupationMeasure(buffer.x, buffer.w, buffer.dim);
}

double central_moment(const OccupationMeasure& mu,
                      std::span<const double> center, int order) {
  if (order < 2 || order % 2 != 0)
    throw UsageError("central_moment: order must be an even integer >= 2");
  if (static_cast<int>(center.size()) != mu.dim())
    throw UsageError("central_moment: center dimension mismatch");
  KahanSum s;
  const int half = order / 2;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s.add(mu.weight(i) * pow_int(dist_sq(mu.point(i), center), half));
  return s.value() / mu.normalization();
}

double w2k_to_dirac(const OccupationMeasure& mu, std::span<const double> m,
                    int k) {
  if (k < 1) throw UsageError("w2k_to_dirac: k must be >= 1");
  return std::pow(central_moment(mu, m, 2 * k), 1.0 / (2.0 * k));
}

namespace {

struct SortedAtoms {
  std::vector<double> x;
  std::vector<double> p;  // normalized weights
};

SortedAtoms sorted_1d(const OccupationMeasure& mu) {
  std::vector<std::size_t> idx(mu.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return mu.point(a)[0] < mu.point(b)[0];
  });
  SortedAtoms out;
  out.x.reserve(idx.size());
  out.p.reserve(idx.size());
  for (std::size_t i : idx) {
    out.x.push_back(mu.point(i)[0]);
    out.p.push_back(mu.weight(i) / mu.normalization());
  }
  return out;
}

double quantile_coupling_cost(const SortedAtoms& a, const SortedAtoms& b,
                              int power) {
  KahanSum cost;
  std::size_t ia = 0, ib = 0;
  double rema = a.p[0], remb = b.p[0];
  while (ia < a.x.size() && ib < b.x.size()) {
    const double m = std::min(rema, remb);
    cost.add(m * pow_int(a.x[ia] - b.x[ib], power));
    rema -= m;
    remb -= m;
    if (rema <= 0.0) {
      if (++ia < a.x.size()) rema = a.p[ia];
    }
    if (remb <= 0.0) {
      if (++ib < b.x.size()) remb = b.p[ib];
    }
  }
  return cost.value();
}

}  // namespace

double w2k_empirical_1d(const OccupationMeasure& mu,
                        const OccupationMeasure& nu, int k) {
  if (mu.dim() != 1 || nu.dim() != 1)
    throw UsageError("w2k_empirical_1d: both measures must be 1-D");
  if (k < 1) throw UsageError("w2k_empirical_1d: k must be >= 1");
  const auto a = sorted_1d(mu);
  const auto b = sorted_1d(nu);
  const double cost = quantile_coupling_cost(a, b, 2 * k);
  return std::pow(std::max(0.0, cost), 1.0 / (2.0 * k));
}

double sliced_w2(const OccupationMeasure& mu, const OccupationMeasure& nu,
                 int projections, std::uint64_t seed) {
  if (projections < 1) throw UsageError("sliced_w2: projections must be >= 1");
  if (mu.dim() != nu.dim()) throw UsageError("sliced_w2: dimension mismatch");
  const int d = mu.dim();
  if (d < 2) throw UsageError("sliced_w2: requires dimension >= 2");
  std::uint64_t ctr = splitmix64(seed);
  Vec dir(d);
  KahanSum acc;
  for (int p = 0; p < projections; ++p) {
    double n2 = 0.0;
    do {
      for (int j = 0; j < d; ++j) dir[j] = normal_from_u64(splitmix64(ctr++));
      n2 = norm_sq(dir);
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (double& c : dir) c *= inv;

    auto project = [&](const OccupationMeasure& m) {
      std::vector<double> px(m.size()), pw(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        px[i] = dot(m.point(i), dir);
        pw[i] = m.weight(i);
      }
      return OccupationMeasure(std::move(px), std::move(pw), 1);
    };
    const double w2 = w2k_empirical_1d(project(mu), project(nu), 1);
    acc.add(w2 * w2);
  }
  return std::sqrt(acc.value() / projections);
}

TailProfile tail_profile(const OccupationMeasure& mu,
                         std::span<const double> m,
                         const std::vector<double>& radii) {
  if (radii.empty()) throw UsageError("tail_profile: empty radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw UsageError("tail_profile: radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1]))
      throw UsageError("tail_profile: radii must be increasing");
  }
  if (static_cast<int>(m.size()) != mu.dim())
    throw UsageError("tail_profile: center dimension mismatch");

  std::vector<std::pair<double, double>> dw(mu.size());  // (distance, weight)
  for (std::size_t i = 0; i < mu.size(); ++i)
    dw[i] = {dist(mu.point(i), m), mu.weight(i)};
  std::sort(dw.begin(), dw.end());
  // suffix[i] = total weight at distance >= dw[i]
  std::vector<double> suffix(dw.size() + 1, 0.0);
  for (std::size_t i = dw.size(); i-- > 0;)
    suffix[i] = suffix[i + 1] + dw[i].second;

  TailProfile out;
  out.radii = radii;
  out.tail_mass.reserve(radii.size());
  for (double R : radii) {
    const auto it = std::upper_bound(
        dw.begin(), dw.end(), R,
        [](double r, const std::pair<double, double>& e) { return r < e.first; });
    out.tail_mass.push_back(suffix[it - dw.begin()] / mu.normalization());
  }

  // Least-squares fit of log(mass) = log C - a R over positive masses.
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (out.tail_mass[i] > 0.0) {
      xs.push_back(radii[i]);
      ys.push_back(std::log(out.tail_mass[i]));
    }
  }
  if (xs.size() < 2) {
    out.degenerate = true;
    return out;
  }
  const auto n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) {
    out.degenerate = true;
    return out;
  }
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  out.a = -slope;
  out.C = std::exp(intercept);
  double ss_res = 0, ss_tot = 0;
  const double ymean = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fit = intercept + slope * xs[i];
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
  }
  out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return out;
}

StabilisationEstimate estimate_stabilisation_time(
    const PotentialSpec& V, const PotentialSpec& W, const SimConfig& config,
    double kappa, int replicas, const std::vector<double>& checkpoints,
    int order_2k, int workers) {
  if (replicas < 30)
    throw UsageError("estimate_stabilisation_time: needs >= 30 replicas");
  if (!(kappa >= 0.0)) throw UsageError("kappa must be >= 0");
  if (checkpoints.empty()) throw UsageError("no checkpoints");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (!(checkpoints[i] > 0.0))
      throw UsageError("checkpoints must be positive");
    if (i > 0 && !(checkpoints[i] > checkpoints[i - 1]))
      throw UsageError("checkpoints must be increasing");
  }
  config.validate();
  if (checkpoints.back() > config.t_end + 1e-9)
    throw ConfigError("checkpoint horizon exceeds sim.t_end");

  const std::size_t nc = checkpoints.size();
  std::vector<std::vector<double>> dist_at(replicas,
                                           std::vector<double>(nc, 0.0));

  parallel_for(replicas, workers, [&](std::size_t r) {
    SelfInteractingSimulator sim(V, W, config,
                                 static_cast<std::uint64_t>(r));
    sim.state().enable_moment_tracker(V.minimizer(), order_2k);
    const auto n =
        static_cast<long long>(std::ceil(config.t_end / config.dt - 1e-9));
    sim.state().reserve_steps(n);
    std::size_t next_cp = 0;
    for (long long i = 0; i < n && next_cp < nc; ++i) {
      sim.step();
      while (next_cp < nc && sim.t() >= checkpoints[next_cp] - 1e-9) {
        dist_at[r][next_cp] = sim.state().tracked_w2k();
        ++next_cp;
      }
    }
  });

  StabilisationEstimate est;
  est.kappa = kappa;
  est.sigma = config.sigma;
  est.replica_count = replicas;
  est.checkpoints = checkpoints;
  est.mean_dist.resize(nc);
  est.std_err.resize(nc);
  est.q10.resize(nc);
  est.q90.resize(nc);
  std::vector<double> column(replicas);
  for (std::size_t j = 0; j < nc; ++j) {
    double mean = 0.0;
    for (int r = 0; r < replicas; ++r) mean += dist_at[r][j];
    mean /= replicas;
    double var = 0.0;
    for (int r = 0; r < replicas; ++r) {
      const double d = dist_at[r][j] - mean;
      var += d * d;
    }
    var /= std::max(1, replicas - 1);
    est.mean_dist[j] = mean;
    est.std_err[j] = std::sqrt(var / replicas);
    for (int r = 0; r < replicas; ++r) column[r] = dist_at[r][j];
    std::sort(column.begin(), column.end());
    auto quantile = [&](double q) {
      const double pos = q * (replicas - 1);
      const auto i = static_cast<std::size_t>(pos);
      if (i + 1 >= column.size()) return column.back();
      const double frac = pos - i;
      return column[i] * (1.0 - frac) + column[i + 1] * frac;
    };
    est.q10[j] = quantile(0.10);
    est.q90[j] = quantile(0.90);
  }
  est.trailing_mean = est.mean_dist.back();

  // Earliest checkpoint whose whole suffix stays below kappa.
  double suffix_max = -1.0;
  std::size_t t_hat_idx = nc;
  for (std::size_t j = nc; j-- > 0;) {
    suffix_max = std::max(suffix_max, est.mean_dist[j]);
    if (suffix_max <= kappa) t_hat_idx = j;
  }
  if (t_hat_idx < nc) {
    est.stabilised = true;
    est.t_hat = checkpoints[t_hat_idx];
  }
  return est;
}

}  // namespace sidlab
