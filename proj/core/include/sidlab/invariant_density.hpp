#pragma once

#include <utility>
#include <vector>

#include "sidlab/potentials.hpp"

namespace sidlab {

struct GridSpec {
  double lo = -1.0;
  double hi = 1.0;
  int n = 101;
  double step() const { return (hi - lo) / (n - 1); }
  double x(int i) const { return lo + step() * i; }
  bool operator==(const GridSpec&) const = default;
};

/// Normalized density on a uniform 1-D grid (trapezoidal integral 1).
class GridDensity {
 public:
  GridDensity(GridSpec grid, std::vector<double> values);
  static GridDensity uniform(const GridSpec& grid);
  /// All mass in the cell nearest to `at`.
  static GridDensity dirac(const GridSpec& grid, double at);

  const GridSpec& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double integral() const;
  double mean() const;
  double variance() const;
  double second_moment_about(double c) const;

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// The Gibbs map: exp(-(2/sigma^2)(V + W * mu)) renormalized, with the
/// convolution by trapezoidal quadrature and a max-shift before exp.
GridDensity apply_Pi(const GridDensity& density, const PotentialSpec& V,
                     const PotentialSpec& W, double sigma);

struct FixedPointConfig {
  double sigma = 1.0;
  double damping = 0.5;   // Picard damping lambda in (0, 1]
  double tol = 1e-8;      // L1 grid residual
  int max_iter = 500;
  GridSpec grid;
};

struct FixedPointDiagnostics {
  int iterations = 0;
  std::vector<double> residuals;
  bool damping_warning = false;  // residuals grew after the first 5 iterations
};

/// Damped Picard iteration mu <- (1-lambda) mu + lambda Pi(mu) from the
/// uniform density until ||Pi(mu) - mu||_L1 <= tol.
std::pair<GridDensity, FixedPointDiagnostics> solve_fixed_point(
    const PotentialSpec& V, const PotentialSpec& W,
    const FixedPointConfig& config);

struct DensityDistance {
  double l1 = 0.0;
  double w2 = 0.0;
};

/// L1 by trapezoid; W2 by inverse-CDF quadrature on a midpoint quantile mesh.
DensityDistance density_distance(const GridDensity& d1, const GridDensity& d2,
                                 int quantile_points = 8192);

}  // namespace sidlab
