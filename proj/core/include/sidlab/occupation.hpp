#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sidlab/potentials.hpp"
#include "sidlab/sde.hpp"
#include "sidlab/vec.hpp"

namespace sidlab {

/// Weighted empirical measure (immutable snapshot).
class OccupationMeasure {
 public:
  OccupationMeasure(std::vector<double> points_rowmajor,
                    std::vector<double> weights, int dim);
  static OccupationMeasure from_buffer(const PathBuffer& buffer);

  int dim() const { return dim_; }
  std::size_t size() const { return w_.size(); }
  double normalization() const { return norm_; }
  std::span<const double> point(std::size_t i) const {
    return {x_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }
  double weight(std::size_t i) const { return w_[i]; }

 private:
  std::vector<double> x_, w_;
  int dim_ = 1;
  double norm_ = 0.0;
};

/// (1/normalization) sum_i w_i |x_i - center|^order, even order >= 2.
double central_moment(const OccupationMeasure& mu,
                      std::span<const double> center, int order);

/// W_{2k}(mu, delta_m): the coupling with a Dirac is unique, so this is
/// exactly central_moment(mu, m, 2k)^(1/2k) in any dimension.
double w2k_to_dirac(const OccupationMeasure& mu, std::span<const double> m,
                    int k);

/// Exact 1-D W_{2k} via the quantile (sorted, weight-aligned) coupling.
double w2k_empirical_1d(const OccupationMeasure& mu,
                        const OccupationMeasure& nu, int k);

/// Root-mean of squared 1-D W_2 distances over seeded random projections;
/// multi-D diagnostic only.
double sliced_w2(const OccupationMeasure& mu, const OccupationMeasure& nu,
                 int projections, std::uint64_t seed);

struct TailProfile {
  std::vector<double> radii;
  std::vector<double> tail_mass;  // mu(|y - m| > R), non-increasing
  double C = 0.0;                 // fitted prefactor of C exp(-a R)
  double a = 0.0;                 // fitted decay rate
  double r_squared = 0.0;
  bool degenerate = false;        // too few positive masses to fit
};

/// Empirical tail masses about m and a least-squares exponential fit over
/// the radii with positive mass.
TailProfile tail_profile(const OccupationMeasure& mu, std::span<const double> m,
                         const std::vector<double>& radii);

struct StabilisationEstimate {
  double kappa = 0.0;
  double sigma = 0.0;
  double t_hat = std::numeric_limits<double>::infinity();
  bool stabilised = false;
  int replica_count = 0;
  std::vector<double> checkpoints;
  std::vector<double> mean_dist;  // replica mean of W_2k(mu_t, delta_m)
  std::vector<double> std_err;
  // Replica quantiles per checkpoint, reported alongside the means.
  std::vector<double> q10, q90;
  double trailing_mean = 0.0;
};

/// Monte Carlo estimate of E[W_{2k}(mu_t, delta_m)] on a checkpoint grid;
/// t_hat is the earliest checkpoint after which every later checkpoint mean
/// stays <= kappa (infinity and stabilised=false when none qualifies).
StabilisationEstimate estimate_stabilisation_time(
    const PotentialSpec& V, const PotentialSpec& W, const SimConfig& config,
    double kappa, int replicas, const std::vector<double>& checkpoints,
    int order_2k = 2, int workers = 1);

}  // namespace sidlab
