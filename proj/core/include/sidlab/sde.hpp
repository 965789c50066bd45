#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "sidlab/potentials.hpp"
#include "sidlab/vec.hpp"

namespace sidlab {

inline constexpr int kMaxDim = 32;

struct SimConfig {
  double sigma = 0.0;
  double dt = 1e-3;
  double t_end = 1.0;
  Vec x0;
  std::uint64_t master_seed = 0;
  int decimation_stride = 1;
  int warmup_steps = 1;
  void validate() const;
};

/// Counter-based stream of i.i.d. N(0,1) increments: the value for
/// (stream_seed, step_index, component) is a pure function of the triple,
/// so replicas are reproducible and order-independent.
class BrownianSource {
 public:
  BrownianSource(std::uint64_t stream_seed, int dim, double dt);
  double normal(std::uint64_t step_index, int component) const;
  /// Writes sqrt(dt) * N(0,1) per component.
  void increment(std::uint64_t step_index, std::span<double> out) const;
  int dim() const { return dim_; }
  double dt() const { return dt_; }

 private:
  std::uint64_t seed_;
  int dim_;
  double dt_;
  double sqrt_dt_;
};

std::uint64_t brownian_stream_seed(std::uint64_t master_seed,
                                   std::uint64_t replica_index);

/// Decimated past-path storage, struct-of-arrays.
struct PathBuffer {
  int dim = 0;
  std::vector<double> t;
  std::vector<double> w;
  std::vector<double> x;  // row-major, size() * dim
  std::size_t size() const { return t.size(); }
  std::span<const double> point(std::size_t i) const {
    return {x.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

/// Current time/position plus the decimated past-path buffer realizing the
/// occupation measure. Every raw step contributes weight dt; a block of
/// `decimation_stride` raw steps is represented by its last position
/// carrying the block's total weight. Running compensated sums keep the
/// weighted mean and an optional central moment O(1) per query.
class TrajectoryState {
 public:
  TrajectoryState(Vec x0, int decimation_stride);

  double t() const { return t_; }
  std::span<const double> x() const { return x_; }
  int dim() const { return static_cast<int>(x_.size()); }
  long long raw_steps() const { return raw_steps_; }
  const PathBuffer& buffer() const { return buf_; }
  double total_weight() const { return wtot_.value(); }
  int decimation_stride() const { return stride_; }

  /// Weighted mean of the buffer (undefined while the buffer is empty).
  void weighted_mean(std::span<double> out) const;

  /// Track (1/W) sum w_i |x_i - center|^order alongside the buffer.
  void enable_moment_tracker(Vec center, int order);
  bool has_moment_tracker() const { return track_; }
  double tracked_central_moment() const;
  /// tracked_central_moment()^(1/order): exact W_order distance to the
  /// Dirac at the tracked center.
  double tracked_w2k() const;

  /// Largest in-block path length seen; bounds the decimation error of the
  /// interaction drift via Lip(grad W) * max_block_displacement().
  double max_block_displacement() const { return max_block_disp_; }

  /// Records the pre-update position with weight dt (merging per stride).
  void append_current(double dt);
  /// Moves to x_new, advancing time by dt. Throws ExplosionError if x_new
  /// has a non-finite coordinate.
  void advance_to(std::span<const double> x_new, double dt);

  void reserve_steps(long long raw_step_estimate);

 private:
  double moment_term(std::span<const double> p) const;

  double t_ = 0.0;
  Vec x_;
  int stride_ = 1;
  long long raw_steps_ = 0;
  PathBuffer buf_;
  int block_fill_ = 0;
  double block_path_len_ = 0.0;
  double max_block_disp_ = 0.0;
  std::vector<KahanSum> wsum_;
  KahanSum wtot_;
  bool track_ = false;
  Vec track_center_;
  int track_order_ = 2;
  KahanSum tmoment_;
};

/// (1/total_weight) sum_i w_i grad W(x - x_i); zero vector while the buffer
/// is empty (the t -> 0 convention; grad W(0) = 0 for admissible W).
/// Quadratic W takes an O(1) running-mean path, exactly matching the
/// buffer sum up to compensated-summation error.
void interaction_drift(const TrajectoryState& state, const PotentialSpec& W,
                       std::span<double> out);
Vec interaction_drift(const TrajectoryState& state, const PotentialSpec& W);
/// Brute-force O(buffer) evaluation, the oracle for the fast path.
Vec interaction_drift_direct(const TrajectoryState& state,
                             const PotentialSpec& W);

/// One Euler-Maruyama update of Eq-style dynamics
///   x' = x - (grad V(x) + interaction_drift) dt + sigma dB,
/// appending the pre-update position to the buffer. The first
/// `warmup_steps` steps use only -grad V.
void step_self_interacting(TrajectoryState& state, const PotentialSpec& V,
                           const PotentialSpec& W, const SimConfig& config,
                           std::span<const double> dB);

/// Frozen dynamics y' = y - (grad V(y) + grad W(y - m)) dt + sigma dB.
void step_frozen(TrajectoryState& state, const PotentialSpec& V,
                 const PotentialSpec& W, std::span<const double> m,
                 const SimConfig& config, std::span<const double> dB);

struct Trajectory {
  TrajectoryState state;  // final state; buffer holds the decimated path
  long long steps = 0;
  bool stopped_early = false;
};

using StopPredicate = std::function<bool(const TrajectoryState&)>;

class SelfInteractingSimulator {
 public:
  SelfInteractingSimulator(PotentialSpec V, PotentialSpec W, SimConfig config,
                           std::uint64_t replica_index);
  void step();
  double t() const { return state_.t(); }
  std::span<const double> x() const { return state_.x(); }
  double dt() const { return config_.dt; }
  TrajectoryState& state() { return state_; }
  const TrajectoryState& state() const { return state_; }
  TrajectoryState take_state() { return std::move(state_); }

 private:
  PotentialSpec V_, W_;
  SimConfig config_;
  BrownianSource noise_;
  TrajectoryState state_;
  Vec db_;
};

class FrozenSimulator {
 public:
  FrozenSimulator(PotentialSpec V, PotentialSpec W, Vec m, SimConfig config,
                  std::uint64_t replica_index);
  void step();
  double t() const { return state_.t(); }
  std::span<const double> x() const { return state_.x(); }
  double dt() const { return config_.dt; }
  TrajectoryState& state() { return state_; }
  const TrajectoryState& state() const { return state_; }
  TrajectoryState take_state() { return std::move(state_); }

 private:
  PotentialSpec V_, W_;
  Vec m_;
  SimConfig config_;
  BrownianSource noise_;
  TrajectoryState state_;
  Vec db_;
};

Trajectory simulate_self_interacting(const PotentialSpec& V,
                                     const PotentialSpec& W,
                                     const SimConfig& config,
                                     std::uint64_t replica_index,
                                     const StopPredicate& stop = {});

Trajectory simulate_frozen(const PotentialSpec& V, const PotentialSpec& W,
                           const Vec& m, const SimConfig& config,
                           std::uint64_t replica_index);

struct GapPoint {
  double t = 0.0;
  double gap_sq = 0.0;    // |X_t - Y_t|^2
  double w2k_mu = 0.0;    // W_2k(mu_t, delta_m), exact moment form
  double max_y_norm = 0.0;  // running sup |Y_s|
};

struct CoupledRun {
  Trajectory x_run;
  std::vector<std::pair<double, Vec>> y_samples;
  Vec y_final;
  std::vector<GapPoint> gap;
};

/// X and Y share the Brownian path; Y coincides with X up to t_switch and
/// follows the frozen dynamics afterwards. The gap series is recorded at
/// the decimation cadence.
CoupledRun simulate_coupled(const PotentialSpec& V, const PotentialSpec& W,
                            const Vec& m, const SimConfig& config,
                            std::uint64_t replica_index, double t_switch,
                            int order_2k = 2);

using Membership = std::function<bool(std::span<const double>)>;

struct FlowPath {
  std::vector<std::pair<double, Vec>> samples;
  Vec terminal;
  double terminal_distance_to_m = 0.0;
  bool domain_checked = false;
  bool stayed_in_domain = true;
  int halvings = 0;
  double dt_used = 0.0;
  double endpoint_change = 0.0;
};

/// Zero-noise flow with the memory drift, refined by step halving until the
/// endpoint moves less than endpoint_tol (at most max_halvings halvings,
/// else AccuracyError).
FlowPath deterministic_flow(const PotentialSpec& V, const PotentialSpec& W,
                            const Vec& x0, double t_end, double dt,
                            const Membership& domain = {},
                            double endpoint_tol = 1e-6, int max_halvings = 3);

/// Zero-noise flow of the frozen field -grad V - grad W(. - m).
FlowPath frozen_flow(const PotentialSpec& V, const PotentialSpec& W,
                     const Vec& m, const Vec& x, double t_end, double dt,
                     const Membership& domain = {}, double endpoint_tol = 1e-6,
                     int max_halvings = 3);

}  // namespace sidlab
