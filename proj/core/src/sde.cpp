#include "sidlab/sde.hpp"

#include <algorithm>
#include <cmath>

#include "sidlab/errors.hpp"
#include "sidlab/seeding.hpp"

namespace sidlab {

double normal_from_u64(std::uint64_t z) {
  constexpr double kInv32 = 1.0 / 4294967296.0;
  constexpr double kTwoPi = 6.283185307179586;
  const double u1 = (static_cast<double>(z & 0xFFFFFFFFULL) + 0.5) * kInv32;
  const double u2 = (static_cast<double>(z >> 32) + 0.5) * kInv32;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

void SimConfig::validate() const {
  if (x0.empty()) throw ConfigError("sim.x0 must be non-empty");
  if (static_cast<int>(x0.size()) > kMaxDim)
    throw ConfigError("sim.x0 dimension exceeds supported maximum");
  if (!all_finite(x0)) throw ConfigError("sim.x0 must be finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sim.dt must be > 0");
  if (!(t_end > 0.0) || !std::isfinite(t_end))
    throw ConfigError("sim.t_end must be > 0");
  if (!(dt < t_end)) throw ConfigError("sim.dt must be < sim.t_end");
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ConfigError("sim.sigma must be >= 0");
  if (decimation_stride < 1)
    throw ConfigError("sim.decimation_stride must be >= 1");
  if (warmup_steps < 1) throw ConfigError("sim.warmup_steps must be >= 1");
}

BrownianSource::BrownianSource(std::uint64_t stream_seed, int dim, double dt)
    : seed_(stream_seed), dim_(dim), dt_(dt), sqrt_dt_(std::sqrt(dt)) {
  if (dim < 1 || dim > kMaxDim) throw UsageError("BrownianSource: bad dimension");
  if (!(dt > 0.0)) throw UsageError("BrownianSource: dt must be > 0");
}

double BrownianSource::normal(std::uint64_t step_index, int component) const {
  // splitmix64 stream value at counter position; pure function of the triple.
  const std::uint64_t ctr =
      step_index * static_cast<std::uint64_t>(dim_) + component;
  return normal_from_u64(splitmix64(seed_ + ctr * 0x9E3779B97F4A7C15ULL));
}

void BrownianSource::increment(std::uint64_t step_index,
                               std::span<double> out) const {
  const std::uint64_t base = step_index * static_cast<std::uint64_t>(dim_);
  for (int c = 0; c < dim_; ++c)
    out[c] = sqrt_dt_ *
             normal_from_u64(splitmix64(seed_ + (base + c) * 0x9E3779B97F4A7C15ULL));
}

std::uint64_t brownian_stream_seed(std::uint64_t master_seed,
                                   std::uint64_t replica_index) {
  return derive_seed(master_seed, "brownian", replica_index);
}

TrajectoryState::TrajectoryState(Vec x0, int decimation_stride)
    : x_(std::move(x0)), stride_(decimation_stride) {
  if (x_.empty() || static_cast<int>(x_.size()) > kMaxDim)
    throw UsageError("TrajectoryState: bad dimension");
  if (!all_finite(x_)) throw DomainError("TrajectoryState: x0 not finite");
  if (stride_ < 1) throw UsageError("TrajectoryState: stride must be >= 1");
  buf_.dim = dim();
  wsum_.resize(x_.size());
}

void TrajectoryState::weighted_mean(std::span<double> out) const {
  const double W = wtot_.value();
  if (W <= 0.0) throw UsageError("weighted_mean on empty buffer");
  for (std::size_t i = 0; i < wsum_.size(); ++i) out[i] = wsum_[i].value() / W;
}

void TrajectoryState::enable_moment_tracker(Vec center, int order) {
  if (raw_steps_ != 0 || !buf_.t.empty())
    throw UsageError("moment tracker must be enabled before stepping");
  if (center.size() != x_.size())
    throw UsageError("moment tracker center dimension mismatch");
  if (order < 2 || order % 2 != 0)
    throw UsageError("moment tracker order must be an even integer >= 2");
  track_ = true;
  track_center_ = std::move(center);
  track_order_ = order;
}

double TrajectoryState::moment_term(std::span<const double> p) const {
  return pow_int(dist_sq(p, track_center_), track_order_ / 2);
}

double TrajectoryState::tracked_central_moment() const {
  if (!track_) throw UsageError("moment tracker not enabled");
  const double W = wtot_.value();
  return W > 0.0 ? std::max(0.0, tmoment_.value() / W) : 0.0;
}

double TrajectoryState::tracked_w2k() const {
  return std::pow(tracked_central_moment(), 1.0 / track_order_);
}

void TrajectoryState::append_current(double dt) {
  const int d = dim();
  if (buf_.t.empty() || block_fill_ >= stride_) {
    buf_.t.push_back(t_);
    buf_.w.push_back(dt);
    buf_.x.insert(buf_.x.end(), x_.begin(), x_.end());
    block_fill_ = 1;
    block_path_len_ = 0.0;
    wtot_.add(dt);
    for (int i = 0; i < d; ++i) wsum_[i].add(dt * x_[i]);
    if (track_) tmoment_.add(dt * moment_term(x_));
    return;
  }
  // Merge into the open block: the representative is the block's last
  // position carrying the block's total weight.
  const std::size_t last = buf_.size() - 1;
  double* row = buf_.x.data() + last * d;
  const double old_w = buf_.w[last];
  const double new_w = old_w + dt;
  block_path_len_ += dist({row, static_cast<std::size_t>(d)}, x_);
  max_block_disp_ = std::max(max_block_disp_, block_path_len_);
  wtot_.add(dt);
  for (int i = 0; i < d; ++i) {
    wsum_[i].add(-old_w * row[i]);
    wsum_[i].add(new_w * x_[i]);
  }
  if (track_) {
    tmoment_.add(-old_w * moment_term({row, static_cast<std::size_t>(d)}));
    tmoment_.add(new_w * moment_term(x_));
  }
  buf_.w[last] = new_w;
  buf_.t[last] = t_;
  std::copy(x_.begin(), x_.end(), row);
  ++block_fill_;
}

void TrajectoryState::advance_to(std::span<const double> x_new, double dt) {
  if (x_new.size() != x_.size())
    throw UsageError("advance_to dimension mismatch");
  if (!all_finite(x_new))
    throw ExplosionError("trajectory exploded: non-finite coordinate",
                         raw_steps_);
  std::copy(x_new.begin(), x_new.end(), x_.begin());
  t_ += dt;
  ++raw_steps_;
}

void TrajectoryState::reserve_steps(long long raw_step_estimate) {
  if (raw_step_estimate <= 0) return;
  const auto entries =
      static_cast<std::size_t>(raw_step_estimate / stride_ + 2);
  buf_.t.reserve(entries);
  buf_.w.reserve(entries);
  buf_.x.reserve(entries * dim());
}

void interaction_drift(const TrajectoryState& state, const PotentialSpec& W,
                       std::span<double> out) {
  const int d = state.dim();
  if (W.dimension() != d) throw UsageError("interaction potential dimension mismatch");
  if (W.is_zero() || state.buffer().size() == 0 || state.total_weight() <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const auto x = state.x();
  if (W.is_quadratic()) {
    // grad W(y) = K (y - c); the average collapses onto the running mean.
    const auto K = W.quadratic_curvatures();
    const auto& c = W.minimizer();
    double mean[kMaxDim];
    state.weighted_mean({mean, static_cast<std::size_t>(d)});
    for (int i = 0; i < d; ++i) out[i] = K[i] * (x[i] - mean[i] - c[i]);
    return;
  }
  const auto& buf = state.buffer();
  double acc[kMaxDim] = {0.0};
  double diff[kMaxDim];
  double g[kMaxDim];
  for (std::size_t e = 0; e < buf.size(); ++e) {
    const double* p = buf.x.data() + e * d;
    for (int i = 0; i < d; ++i) diff[i] = x[i] - p[i];
    W.gradient({diff, static_cast<std::size_t>(d)},
               {g, static_cast<std::size_t>(d)});
    const double w = buf.w[e];
    for (int i = 0; i < d; ++i) acc[i] += w * g[i];
  }
  const double Wt = state.total_weight();
  for (int i = 0; i < d; ++i) out[i] = acc[i] / Wt;
}

Vec interaction_drift(const TrajectoryState& state, const PotentialSpec& W) {
  Vec out(state.dim());
  interaction_drift(state, W, out);
  return out;
}

Vec interaction_drift_direct(const TrajectoryState& state,
                             const PotentialSpec& W) {
  const int d = state.dim();
  if (W.dimension() != d) throw UsageError("interaction potential dimension mismatch");
  Vec out(d, 0.0);
  const auto& buf = state.buffer();
  if (W.is_zero() || buf.size() == 0 || state.total_weight() <= 0.0) return out;
  const auto x = state.x();
  Vec diff(d), g(d);
  for (std::size_t e = 0; e < buf.size(); ++e) {
    const double* p = buf.x.data() + e * d;
    for (int i = 0; i < d; ++i) diff[i] = x[i] - p[i];
    W.gradient(diff, g);
    for (int i = 0; i < d; ++i) out[i] += buf.w[e] * g[i];
  }
  const double Wt = state.total_weight();
  for (int i = 0; i < d; ++i) out[i] /= Wt;
  return out;
}

void step_self_interacting(TrajectoryState& state, const PotentialSpec& V,
                           const PotentialSpec& W, const SimConfig& config,
                           std::span<const double> dB) {
  const int d = state.dim();
  if (static_cast<int>(dB.size()) != d) throw UsageError("dB dimension mismatch");
  if (!all_finite(dB)) throw DomainError("dB not finite");
  double gv[kMaxDim], gi[kMaxDim], xn[kMaxDim];
  const auto x = state.x();
  V.gradient(x, {gv, static_cast<std::size_t>(d)});
  if (state.raw_steps() < config.warmup_steps) {
    std::fill(gi, gi + d, 0.0);
  } else {
    interaction_drift(state, W, {gi, static_cast<std::size_t>(d)});
  }
  for (int i = 0; i < d; ++i)
    xn[i] = x[i] - (gv[i] + gi[i]) * config.dt + config.sigma * dB[i];
  state.append_current(config.dt);
  state.advance_to({xn, static_cast<std::size_t>(d)}, config.dt);
}

void step_frozen(TrajectoryState& state, const PotentialSpec& V,
                 const PotentialSpec& W, std::span<const double> m,
                 const SimConfig& config, std::span<const double> dB) {
  const int d = state.dim();
  if (static_cast<int>(dB.size()) != d) throw UsageError("dB dimension mismatch");
  if (static_cast<int>(m.size()) != d) throw UsageError("m dimension mismatch");
  if (!all_finite(dB)) throw DomainError("dB not finite");
  double gv[kMaxDim], gw[kMaxDim], diff[kMaxDim], xn[kMaxDim];
  const auto x = state.x();
  V.gradient(x, {gv, static_cast<std::size_t>(d)});
  if (W.is_zero()) {
    std::fill(gw, gw + d, 0.0);
  } else {
    for (int i = 0; i < d; ++i) diff[i] = x[i] - m[i];
    W.gradient({diff, static_cast<std::size_t>(d)},
               {gw, static_cast<std::size_t>(d)});
  }
  for (int i = 0; i < d; ++i)
    xn[i] = x[i] - (gv[i] + gw[i]) * config.dt + config.sigma * dB[i];
  state.append_current(config.dt);
  state.advance_to({xn, static_cast<std::size_t>(d)}, config.dt);
}

namespace {

SimConfig validated(SimConfig c) {
  c.validate();
  return c;
}

long long step_count(const SimConfig& c) {
  return static_cast<long long>(std::ceil(c.t_end / c.dt - 1e-9));
}

}  // namespace

SelfInteractingSimulator::SelfInteractingSimulator(PotentialSpec V,
                                                   PotentialSpec W,
                                                   SimConfig config,
                                                   std::uint64_t replica_index)
    : V_(std::move(V)),
      W_(std::move(W)),
      config_(validated(std::move(config))),
      noise_(brownian_stream_seed(config_.master_seed, replica_index),
             static_cast<int>(config_.x0.size()), config_.dt),
      state_(config_.x0, config_.decimation_stride),
      db_(config_.x0.size(), 0.0) {
  if (V_.dimension() != state_.dim() || W_.dimension() != state_.dim())
    throw UsageError("potential dimension does not match x0");
}

void SelfInteractingSimulator::step() {
  if (config_.sigma != 0.0)
    noise_.increment(static_cast<std::uint64_t>(state_.raw_steps()), db_);
  step_self_interacting(state_, V_, W_, config_, db_);
}

FrozenSimulator::FrozenSimulator(PotentialSpec V, PotentialSpec W, Vec m,
                                 SimConfig config, std::uint64_t replica_index)
    : V_(std::move(V)),
      W_(std::move(W)),
      m_(std::move(m)),
      config_(validated(std::move(config))),
      noise_(brownian_stream_seed(config_.master_seed, replica_index),
             static_cast<int>(config_.x0.size()), config_.dt),
      state_(config_.x0, config_.decimation_stride),
      db_(config_.x0.size(), 0.0) {
  if (V_.dimension() != state_.dim() || W_.dimension() != state_.dim() ||
      static_cast<int>(m_.size()) != state_.dim())
    throw UsageError("potential/m dimension does not match x0");
}

void FrozenSimulator::step() {
  if (config_.sigma != 0.0)
    noise_.increment(static_cast<std::uint64_t>(state_.raw_steps()), db_);
  step_frozen(state_, V_, W_, m_, config_, db_);
}

Trajectory simulate_self_interacting(const PotentialSpec& V,
                                     const PotentialSpec& W,
                                     const SimConfig& config,
                                     std::uint64_t replica_index,
                                     const StopPredicate& stop) {
  SelfInteractingSimulator sim(V, W, config, replica_index);
  const long long n = step_count(config);
  sim.state().reserve_steps(n);
  long long i = 0;
  bool early = false;
  for (; i < n; ++i) {
    if (stop && stop(sim.state())) {
      early = true;
      break;
    }
    sim.step();
  }
  return {sim.take_state(), i, early};
}

Trajectory simulate_frozen(const PotentialSpec& V, const PotentialSpec& W,
                           const Vec& m, const SimConfig& config,
                           std::uint64_t replica_index) {
  FrozenSimulator sim(V, W, m, config, replica_index);
  const long long n = step_count(config);
  sim.state().reserve_steps(n);
  for (long long i = 0; i < n; ++i) sim.step();
  return {sim.take_state(), n, false};
}

CoupledRun simulate_coupled(const PotentialSpec& V, const PotentialSpec& W,
                            const Vec& m, const SimConfig& config,
                            std::uint64_t replica_index, double t_switch,
                            int order_2k) {
  if (!(t_switch >= 0.0)) throw UsageError("t_switch must be >= 0");
  const SimConfig cfg = validated(config);
  const int d = static_cast<int>(cfg.x0.size());
  if (V.dimension() != d || W.dimension() != d ||
      static_cast<int>(m.size()) != d)
    throw UsageError("potential/m dimension does not match x0");

  BrownianSource noise(brownian_stream_seed(cfg.master_seed, replica_index), d,
                       cfg.dt);
  TrajectoryState stX(cfg.x0, cfg.decimation_stride);
  stX.enable_moment_tracker(m, order_2k);
  const long long n = step_count(cfg);
  stX.reserve_steps(n);

  Vec y = cfg.x0;
  Vec db(d, 0.0);
  double gv[kMaxDim], gw[kMaxDim], diff[kMaxDim], yn[kMaxDim];
  double max_y = norm(y);

  std::vector<GapPoint> gap;
  std::vector<std::pair<double, Vec>> y_samples;
  gap.reserve(static_cast<std::size_t>(n / cfg.decimation_stride + 2));

  for (long long i = 0; i < n; ++i) {
    if (cfg.sigma != 0.0)
      noise.increment(static_cast<std::uint64_t>(i), db);
    step_self_interacting(stX, V, W, cfg, db);
    const double t_after = stX.t();
    if (t_after <= t_switch + 0.5 * cfg.dt) {
      std::copy(stX.x().begin(), stX.x().end(), y.begin());
    } else {
      V.gradient(y, {gv, static_cast<std::size_t>(d)});
      if (W.is_zero()) {
        std::fill(gw, gw + d, 0.0);
      } else {
        for (int j = 0; j < d; ++j) diff[j] = y[j] - m[j];
        W.gradient({diff, static_cast<std::size_t>(d)},
                   {gw, static_cast<std::size_t>(d)});
      }
      for (int j = 0; j < d; ++j)
        yn[j] = y[j] - (gv[j] + gw[j]) * cfg.dt + cfg.sigma * db[j];
      if (!all_finite({yn, static_cast<std::size_t>(d)}))
        throw ExplosionError("frozen leg exploded: non-finite coordinate", i);
      std::copy(yn, yn + d, y.begin());
    }
    max_y = std::max(max_y, norm(y));
    if ((i + 1) % cfg.decimation_stride == 0 || i + 1 == n) {
      gap.push_back({t_after, dist_sq(stX.x(), y), stX.tracked_w2k(), max_y});
      y_samples.emplace_back(t_after, y);
    }
  }
  Vec y_final = y;
  return CoupledRun{Trajectory{std::move(stX), n, false}, std::move(y_samples),
                    std::move(y_final), std::move(gap)};
}

namespace {

struct FlowScratch {
  std::vector<std::pair<double, Vec>> samples;
  Vec terminal;
  bool stayed = true;
};

// Frozen-field flow (also covers W == 0); O(1) memory.
FlowScratch run_flow_frozen(const PotentialSpec& V, const PotentialSpec& W,
                            std::span<const double> m, const Vec& x0,
                            double t_end, double dt,
                            const Membership& domain) {
  const int d = static_cast<int>(x0.size());
  const auto n = static_cast<long long>(std::ceil(t_end / dt - 1e-9));
  const long long sample_every = std::max<long long>(1, n / 4000);
  FlowScratch out;
  out.samples.reserve(static_cast<std::size_t>(n / sample_every + 2));
  Vec x = x0;
  double t = 0.0;
  double gv[kMaxDim], gw[kMaxDim], diff[kMaxDim];
  for (long long i = 0; i < n; ++i) {
    if (domain && !domain(x)) out.stayed = false;
    if (i % sample_every == 0) out.samples.emplace_back(t, x);
    V.gradient(x, {gv, static_cast<std::size_t>(d)});
    if (W.is_zero()) {
      std::fill(gw, gw + d, 0.0);
    } else {
      for (int j = 0; j < d; ++j) diff[j] = x[j] - m[j];
      W.gradient({diff, static_cast<std::size_t>(d)},
                 {gw, static_cast<std::size_t>(d)});
    }
    for (int j = 0; j < d; ++j) x[j] -= (gv[j] + gw[j]) * dt;
    if (!all_finite(x))
      throw ExplosionError("flow exploded: non-finite coordinate", i);
    t += dt;
  }
  if (domain && !domain(x)) out.stayed = false;
  out.samples.emplace_back(t, x);
  out.terminal = std::move(x);
  return out;
}

// Memory flow: the same buffer machinery as the SDE with sigma = 0.
FlowScratch run_flow_memory(const PotentialSpec& V, const PotentialSpec& W,
                            const Vec& x0, double t_end, double dt,
                            const Membership& domain) {
  SimConfig cfg;
  cfg.sigma = 0.0;
  cfg.dt = dt;
  cfg.t_end = t_end;
  cfg.x0 = x0;
  cfg.decimation_stride = 1;
  cfg.warmup_steps = 1;
  cfg.validate();
  TrajectoryState st(x0, 1);
  const auto n = static_cast<long long>(std::ceil(t_end / dt - 1e-9));
  st.reserve_steps(n);
  const long long sample_every = std::max<long long>(1, n / 4000);
  FlowScratch out;
  out.samples.reserve(static_cast<std::size_t>(n / sample_every + 2));
  const Vec zeros(x0.size(), 0.0);
  for (long long i = 0; i < n; ++i) {
    if (domain && !domain(st.x())) out.stayed = false;
    if (i % sample_every == 0)
      out.samples.emplace_back(st.t(), Vec(st.x().begin(), st.x().end()));
    step_self_interacting(st, V, W, cfg, zeros);
  }
  if (domain && !domain(st.x())) out.stayed = false;
  out.samples.emplace_back(st.t(), Vec(st.x().begin(), st.x().end()));
  out.terminal.assign(st.x().begin(), st.x().end());
  return out;
}

FlowPath refine_flow(const std::function<FlowScratch(double)>& run,
                     std::span<const double> m, const bool domain_checked,
                     double dt, double endpoint_tol, int max_halvings) {
  if (!(dt > 0.0)) throw UsageError("flow dt must be > 0");
  if (max_halvings < 1) throw UsageError("flow needs max_halvings >= 1");
  FlowScratch coarse = run(dt);
  for (int h = 1; h <= max_halvings; ++h) {
    const double fine_dt = dt / static_cast<double>(1LL << h);
    FlowScratch fine = run(fine_dt);
    const double change = dist(coarse.terminal, fine.terminal);
    if (change < endpoint_tol) {
      FlowPath path;
      path.samples = std::move(fine.samples);
      path.terminal = std::move(fine.terminal);
      path.terminal_distance_to_m = dist(path.terminal, m);
      path.domain_checked = domain_checked;
      path.stayed_in_domain = coarse.stayed && fine.stayed;
      path.halvings = h;
      path.dt_used = fine_dt;
      path.endpoint_change = change;
      return path;
    }
    coarse = std::move(fine);
  }
  throw AccuracyError(
      "flow refinement: endpoint still moving after max step halvings");
}

}  // namespace

FlowPath deterministic_flow(const PotentialSpec& V, const PotentialSpec& W,
                            const Vec& x0, double t_end, double dt,
                            const Membership& domain, double endpoint_tol,
                            int max_halvings) {
  if (V.dimension() != static_cast<int>(x0.size()) ||
      W.dimension() != static_cast<int>(x0.size()))
    throw UsageError("flow dimension mismatch");
  if (!all_finite(x0)) throw DomainError("flow x0 not finite");
  auto run = [&](double h) {
    return W.is_zero()
               ? run_flow_frozen(V, W, V.minimizer(), x0, t_end, h, domain)
               : run_flow_memory(V, W, x0, t_end, h, domain);
  };
  return refine_flow(run, V.minimizer(), static_cast<bool>(domain), dt,
                     endpoint_tol, max_halvings);
}

FlowPath frozen_flow(const PotentialSpec& V, const PotentialSpec& W,
                     const Vec& m, const Vec& x, double t_end, double dt,
                     const Membership& domain, double endpoint_tol,
                     int max_halvings) {
  if (V.dimension() != static_cast<int>(x.size()) ||
      W.dimension() != static_cast<int>(x.size()) || m.size() != x.size())
    throw UsageError("flow dimension mismatch");
  if (!all_finite(x) || !all_finite(m)) throw DomainError("flow input not finite");
  auto run = [&](double h) {
    return run_flow_frozen(V, W, m, x, t_end, h, domain);
  };
  return refine_flow(run, m, static_cast<bool>(domain), dt, endpoint_tol,
                     max_halvings);
}

}  // namespace sidlab
