#include "sidlab/invariant_density.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sidlab/errors.hpp"
#include "sidlab/vec.hpp"

namespace sidlab {

namespace {

double trapezoid_weight(const GridSpec& g, int i) {
  return (i == 0 || i == g.n - 1) ? 0.5 * g.step() : g.step();
}

double trapz(const GridSpec& g, const std::vector<double>& v) {
  KahanSum s;
  for (int i = 0; i < g.n; ++i) s.add(trapezoid_weight(g, i) * v[i]);
  return s.value();
}

void check_grid(const GridSpec& g) {
  if (g.n < 2) throw UsageError("grid needs at least 2 points");
  if (!(g.hi > g.lo)) throw UsageError("grid hi must exceed lo");
  if (!std::isfinite(g.lo) || !std::isfinite(g.hi))
    throw UsageError("grid bounds must be finite");
}

}  // namespace

GridDensity::GridDensity(GridSpec grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  check_grid(grid_);
  if (static_cast<int>(values_.size()) != grid_.n)
    throw UsageError("GridDensity: values size does not match grid");
  double raw = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw UsageError("GridDensity: values must be finite and >= 0");
  }
  raw = trapz(grid_, values_);
  if (!(raw > 0.0) || !std::isfinite(raw))
    throw UsageError("GridDensity: total mass must be positive");
  for (double& v : values_) v /= raw;
}

GridDensity GridDensity::uniform(const GridSpec& grid) {
  check_grid(grid);
  return GridDensity(grid, std::vector<double>(grid.n, 1.0));
}

GridDensity GridDensity::dirac(const GridSpec& grid, double at) {
  check_grid(grid);
  const int i = std::clamp(
      static_cast<int>(std::lround((at - grid.lo) / grid.step())), 0,
      grid.n - 1);
  std::vector<double> v(grid.n, 0.0);
  v[i] = 1.0;
  return GridDensity(grid, std::move(v));
}

double GridDensity::integral() const { return trapz(grid_, values_); }

double GridDensity::mean() const {
  KahanSum s;
  for (int i = 0; i < grid_.n; ++i)
    s.add(trapezoid_weight(grid_, i) * grid_.x(i) * values_[i]);
  return s.value();
}

double GridDensity::second_moment_about(double c) const {
  KahanSum s;
  for (int i = 0; i < grid_.n; ++i) {
    const double d = grid_.x(i) - c;
    s.add(trapezoid_weight(grid_, i) * d * d * values_[i]);
  }
  return s.value();
}

double GridDensity::variance() const { return second_moment_about(mean()); }

GridDensity apply_Pi(const GridDensity& density, const PotentialSpec& V,
                     const PotentialSpec& W, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("apply_Pi: sigma must be > 0");
  if (V.dimension() != 1 || W.dimension() != 1)
    throw UsageError("apply_Pi: potentials must be 1-D");
  const GridSpec& g = density.grid();
  const int n = g.n;
  const double h = g.step();

  // Difference kernel: x_i - y_j = (i - j) h on a uniform grid.
  std::vector<double> kernel(2 * n - 1);
  if (!W.is_zero()) {
    for (int k = -(n - 1); k <= n - 1; ++k) {
      const double diff[1] = {k * h};
      kernel[k + n - 1] = W.value(diff);
    }
  }

  std::vector<double> weighted(n);
  for (int j = 0; j < n; ++j)
    weighted[j] = trapezoid_weight(g, j) * density.values()[j];

  std::vector<double> energy(n);
  int argmin = 0;
  for (int i = 0; i < n; ++i) {
    double conv = 0.0;
    if (!W.is_zero()) {
      const double* krow = kernel.data() + (i + n - 1);
      for (int j = 0; j < n; ++j) conv += krow[-j] * weighted[j];
    }
    const double xi[1] = {g.x(i)};
    energy[i] = V.value(xi) + conv;
    if (energy[i] < energy[argmin]) argmin = i;
  }
  if (argmin == 0 || argmin == n - 1)
    throw GridCoverageError(
        "apply_Pi: effective potential attains its minimum on the grid "
        "boundary; enlarge the grid");

  const double beta = 2.0 / (sigma * sigma);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = std::exp(-beta * (energy[i] - energy[argmin]));
  const double mass = trapz(g, out);
  if (!(mass > 0.0) || !std::isfinite(mass))
    throw GridCoverageError("apply_Pi: degenerate normalization on this grid");
  return GridDensity(g, std::move(out));
}

std::pair<GridDensity, FixedPointDiagnostics> solve_fixed_point(
    const PotentialSpec& V, const PotentialSpec& W,
    const FixedPointConfig& config) {
  if (V.dimension() != 1 || W.dimension() != 1)
    throw UsageError("solve_fixed_point: potentials must be 1-D");
  if (!(config.sigma > 0.0)) throw ConfigError("fixed point: sigma must be > 0");
  if (!(config.damping > 0.0) || config.damping > 1.0)
    throw ConfigError("fixed point: damping must be in (0, 1]");
  if (!(config.tol > 0.0)) throw ConfigError("fixed point: tol must be > 0");
  if (config.max_iter < 1) throw ConfigError("fixed point: max_iter must be >= 1");
  check_grid(config.grid);
  if (config.grid.n > 4096)
    throw ConfigError("fixed point: grid resolution capped at 4096 (O(n^2) convolution)");

  const double rho = V.convexity_lower_bound();
  const double m = V.minimizer()[0];
  if (rho > 0.0) {
    const double margin = 8.0 * config.sigma / std::sqrt(2.0 * rho);
    if (config.grid.lo > m - margin || config.grid.hi < m + margin)
      throw ConfigError("fixed point: grid must cover m +/- 8 sigma/sqrt(2 rho)");
  }

  const GridSpec& g = config.grid;
  GridDensity mu = GridDensity::uniform(g);
  FixedPointDiagnostics diag;
  const double lambda = config.damping;

  for (int it = 1; it <= config.max_iter; ++it) {
    const GridDensity pi = apply_Pi(mu, V, W, config.sigma);
    std::vector<double> absdiff(g.n);
    for (int i = 0; i < g.n; ++i)
      absdiff[i] = std::abs(pi.values()[i] - mu.values()[i]);
    const double residual = trapz(g, absdiff);
    diag.residuals.push_back(residual);
    diag.iterations = it;
    if (diag.residuals.size() > 5) {
      const auto k = diag.residuals.size();
      if (diag.residuals[k - 1] > diag.residuals[k - 2] * (1.0 + 1e-12))
        diag.damping_warning = true;
    }
    if (residual <= config.tol) return {mu, diag};
    std::vector<double> blend(g.n);
    for (int i = 0; i < g.n; ++i)
      blend[i] = (1.0 - lambda) * mu.values()[i] + lambda * pi.values()[i];
    mu = GridDensity(g, std::move(blend));
  }
  throw ConvergenceError("fixed point iteration did not reach tol",
                         diag.residuals.back(), diag.iterations);
}

namespace {

// Inverse CDF on the midpoint quantile mesh via the piecewise-linear CDF.
std::vector<double> inverse_cdf(const GridDensity& d, int nq) {
  const GridSpec& g = d.grid();
  std::vector<double> cdf(g.n, 0.0);
  for (int i = 1; i < g.n; ++i)
    cdf[i] = cdf[i - 1] +
             0.5 * g.step() * (d.values()[i - 1] + d.values()[i]);
  const double total = cdf[g.n - 1];
  for (double& c : cdf) c /= total;

  std::vector<double> out(nq);
  int seg = 0;
  for (int j = 0; j < nq; ++j) {
    const double q = (j + 0.5) / nq;
    while (seg < g.n - 2 && cdf[seg + 1] < q) ++seg;
    const double mass = cdf[seg + 1] - cdf[seg];
    const double frac = mass > 0.0 ? (q - cdf[seg]) / mass : 0.0;
    out[j] = g.x(seg) + frac * g.step();
  }
  return out;
}

}  // namespace

DensityDistance density_distance(const GridDensity& d1, const GridDensity& d2,
                                 int quantile_points) {
  if (!(d1.grid() == d2.grid()))
    throw UsageError("density_distance: grids must match");
  if (quantile_points < 2)
    throw UsageError("density_distance: quantile_points must be >= 2");
  const GridSpec& g = d1.grid();
  std::vector<double> absdiff(g.n);
  for (int i = 0; i < g.n; ++i)
    absdiff[i] = std::abs(d1.values()[i] - d2.values()[i]);
  DensityDistance out;
  out.l1 = trapz(g, absdiff);

  const auto q1 = inverse_cdf(d1, quantile_points);
  const auto q2 = inverse_cdf(d2, quantile_points);
  KahanSum s;
  for (int j = 0; j < quantile_points; ++j) {
    const double d = q1[j] - q2[j];
    s.add(d * d);
  }
  out.w2 = std::sqrt(s.value() / quantile_points);
  return out;
}

}  // namespace sidlab
