#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "sidlab/csv.hpp"
#include "sidlab/errors.hpp"
#include "sidlab/harness.hpp"
#include "sidlab/parallel.hpp"

namespace sidlab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string artifact_version() { return "sidlab 0.1.0"; }

int default_worker_count() {
  if (const char* env = std::getenv("SIDLAB_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

struct RunContext {
  const ExperimentConfig& cfg;
  fs::path out;
  int workers;
  std::vector<std::string> outputs;
  std::vector<std::tuple<std::string, bool, std::string>> checks;
  std::vector<std::uint64_t> replica_seeds;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void check(const std::string& label, bool pass, const std::string& detail) {
    checks.emplace_back(label, pass, detail);
  }
  void note_replica_seeds(std::uint64_t row_master, int replicas) {
    for (int r = 0; r < replicas; ++r)
      replica_seeds.push_back(brownian_stream_seed(row_master, r));
  }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + p.string());
  out << text;
}

std::string fmt_sigma(double s) { return g17(s); }

// ---------------------------------------------------------------------------
// validate_assumptions

void run_validate(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto grid = sample_ball_grid(cfg.V.minimizer(), cfg.validate_cfg.radius,
                                     cfg.validate_cfg.points,
                                     derive_seed(cfg.master_seed, "validate-grid", 0));
  const ValidationReport rep = validate_assumptions(cfg.V, cfg.W, grid);
  json out;
  out["grid_points"] = grid.size();
  out["grid_radius"] = cfg.validate_cfg.radius;
  for (const auto& c : rep.checks) {
    out["checks"].push_back({{"name", c.name},
                             {"pass", c.pass},
                             {"fitted", c.fitted},
                             {"detail", c.detail}});
    ctx.check("validate:" + c.name, c.pass, c.detail);
  }
  out["all_pass"] = rep.all_pass();
  write_text(ctx.file("validation_report.json"), out.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// flow_check

void write_flow_csv(const fs::path& p, const FlowPath& flow, int dim) {
  std::vector<std::string> header{"t"};
  for (int i = 0; i < dim; ++i) header.push_back("x_" + std::to_string(i + 1));
  CsvFile csv(p, header);
  for (const auto& [t, x] : flow.samples) {
    csv.cell(t);
    for (double v : x) csv.cell(v);
    csv.end_row();
  }
}

// Closed-form deviation for diagonal-quadratic fields; negative when no
// closed form applies.
double quadratic_flow_deviation(const FlowPath& flow, const Vec& m,
                                std::span<const double> rates, const Vec& x0) {
  double dev = 0.0;
  for (const auto& [t, x] : flow.samples) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ref = m[i] + (x0[i] - m[i]) * std::exp(-rates[i] * t);
      d2 += (x[i] - ref) * (x[i] - ref);
    }
    dev = std::max(dev, std::sqrt(d2));
  }
  return dev;
}

void run_flow_check(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const Vec& m = cfg.V.minimizer();
  const FlowPath det =
      deterministic_flow(cfg.V, cfg.W, cfg.sim.x0, cfg.flow.t_end, cfg.flow.dt,
                         {}, cfg.flow.endpoint_tol);
  const FlowPath fro = frozen_flow(cfg.V, cfg.W, m, cfg.sim.x0, cfg.flow.t_end,
                                   cfg.flow.dt, {}, cfg.flow.endpoint_tol);
  write_flow_csv(ctx.file("flow_deterministic.csv"), det, cfg.V.dimension());
  write_flow_csv(ctx.file("flow_frozen.csv"), fro, cfg.V.dimension());

  json out;
  out["deterministic"] = {{"halvings", det.halvings},
                          {"dt_used", det.dt_used},
                          {"endpoint_change", det.endpoint_change},
                          {"terminal_distance_to_m", det.terminal_distance_to_m}};
  out["frozen"] = {{"halvings", fro.halvings},
                   {"dt_used", fro.dt_used},
                   {"endpoint_change", fro.endpoint_change},
                   {"terminal_distance_to_m", fro.terminal_distance_to_m}};

  const bool det_oracle = cfg.V.is_quadratic() && cfg.W.is_zero();
  if (det_oracle) {
    const double dev = quadratic_flow_deviation(
        det, m, cfg.V.quadratic_curvatures(), cfg.sim.x0);
    out["deterministic"]["max_deviation_vs_closed_form"] = dev;
    ctx.check("flow:deterministic_closed_form", dev <= cfg.flow.oracle_tol,
              "max deviation " + g17(dev));
  }
  const bool fro_oracle =
      cfg.V.is_quadratic() && (cfg.W.is_zero() || cfg.W.is_quadratic());
  if (fro_oracle) {
    Vec rates(cfg.V.quadratic_curvatures().begin(),
              cfg.V.quadratic_curvatures().end());
    if (cfg.W.is_quadratic())
      for (std::size_t i = 0; i < rates.size(); ++i)
        rates[i] += cfg.W.quadratic_curvatures()[i];
    const double dev = quadratic_flow_deviation(fro, m, rates, cfg.sim.x0);
    out["frozen"]["max_deviation_vs_closed_form"] = dev;
    ctx.check("flow:frozen_closed_form", dev <= cfg.flow.oracle_tol,
              "max deviation " + g17(dev));
  }
  write_text(ctx.file("flow_report.json"), out.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// invariant_fixed_point

void run_invariant(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  FixedPointConfig fc;
  fc.sigma = cfg.invariant.sigma;
  fc.damping = cfg.invariant.damping;
  fc.tol = cfg.invariant.tol;
  fc.max_iter = cfg.invariant.max_iter;
  fc.grid = cfg.invariant.grid;
  const auto [density, diag] = solve_fixed_point(cfg.V, cfg.W, fc);

  {
    CsvFile csv(ctx.file("density.csv"), {"x", "rho"});
    for (int i = 0; i < fc.grid.n; ++i) {
      csv.cell(fc.grid.x(i));
      csv.cell(density.values()[i]);
      csv.end_row();
    }
  }
  json out;
  out["iterations"] = diag.iterations;
  out["residuals"] = diag.residuals;
  out["damping_warning"] = diag.damping_warning;
  out["sigma"] = fc.sigma;
  out["grid"] = {{"lo", fc.grid.lo}, {"hi", fc.grid.hi}, {"n", fc.grid.n}};
  out["mean"] = density.mean();
  out["variance"] = density.variance();
  write_text(ctx.file("diagnostics.json"), out.dump(2) + "\n");
  ctx.check("invariant:converged", true,
            "iterations " + std::to_string(diag.iterations) + ", residual " +
                g17(diag.residuals.back()));
  ctx.check("invariant:residuals_monotone", !diag.damping_warning,
            diag.damping_warning ? "residuals grew; increase damping" : "ok");
}

// ---------------------------------------------------------------------------
// stabilisation

void run_stabilisation(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<double> sigmas = cfg.stabilisation.sigmas;
  if (sigmas.empty()) sigmas.push_back(cfg.sim.sigma);

  CsvFile csv(ctx.file("stabilisation.csv"),
              {"checkpoint_t", "mean_dist", "stderr", "kappa", "sigma", "t_hat"});
  json out;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    SimConfig sc = cfg.sim;
    sc.sigma = sigmas[si];
    sc.master_seed = derive_seed(cfg.master_seed, "stabilisation-row", si);
    ctx.note_replica_seeds(sc.master_seed, cfg.stabilisation.replicas);
    const StabilisationEstimate est = estimate_stabilisation_time(
        cfg.V, cfg.W, sc, cfg.stabilisation.kappa, cfg.stabilisation.replicas,
        cfg.stabilisation.checkpoints, cfg.stabilisation.order_2k, ctx.workers);
    for (std::size_t j = 0; j < est.checkpoints.size(); ++j) {
      csv.cell(est.checkpoints[j]);
      csv.cell(est.mean_dist[j]);
      csv.cell(est.std_err[j]);
      csv.cell(est.kappa);
      csv.cell(est.sigma);
      csv.cell(est.t_hat);
      csv.end_row();
    }
    out["rows"].push_back({{"sigma", est.sigma},
                           {"kappa", est.kappa},
                           {"stabilised", est.stabilised},
                           {"t_hat", est.stabilised ? json(est.t_hat) : json()},
                           {"trailing_mean", est.trailing_mean},
                           {"replicas", est.replica_count},
                           {"checkpoints", est.checkpoints},
                           {"mean_dist", est.mean_dist},
                           {"q10", est.q10},
                           {"q90", est.q90}});
    ctx.check("stabilisation:finite_t_hat sigma=" + fmt_sigma(est.sigma),
              est.stabilised,
              est.stabilised ? "t_hat " + g17(est.t_hat)
                             : "not stabilised; trailing mean " +
                                   g17(est.trailing_mean));
  }
  write_text(ctx.file("stabilisation_report.json"), out.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// coupling_gap

void run_coupling_gap(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const Vec& m = cfg.V.minimizer();
  const double t_switch = cfg.coupling_gap.t_switch;
  const double horizon = cfg.coupling_gap.horizon_factor * t_switch;
  const int replicas = cfg.coupling_gap.replicas;
  const int order = cfg.coupling_gap.order_2k;
  const bool bound_applicable = cfg.W.is_quadratic();
  double bound_C = 0.0;
  if (bound_applicable) {
    const auto K = cfg.W.quadratic_curvatures();
    bound_C = *std::max_element(K.begin(), K.end());
  }
  const double theta =
      cfg.V.convexity_lower_bound() + cfg.W.convexity_lower_bound();

  CsvFile summary(ctx.file("coupling_summary.csv"),
                  {"sigma", "replicas", "median_sup_gap", "mean_sup_gap",
                   "bound_pass_fraction", "bound_C", "order_2k"});
  json report;
  std::vector<double> medians;
  for (std::size_t si = 0; si < cfg.coupling_gap.sigmas.size(); ++si) {
    const double sigma = cfg.coupling_gap.sigmas[si];
    SimConfig sc = cfg.sim;
    sc.sigma = sigma;
    sc.t_end = horizon;
    sc.master_seed = derive_seed(cfg.master_seed, "coupling-row", si);
    ctx.note_replica_seeds(sc.master_seed, replicas);

    std::vector<double> sup_gap(replicas, 0.0);
    std::vector<char> bound_ok(replicas, 1);
    const auto n_dump = static_cast<std::size_t>(
        std::min(replicas, cfg.coupling_gap.dump_replicas));
    std::vector<std::vector<GapPoint>> dumped(n_dump);
    std::vector<PathBuffer> dumped_paths(n_dump);

    parallel_for(replicas, ctx.workers, [&](std::size_t r) {
      CoupledRun run = simulate_coupled(cfg.V, cfg.W, m, sc,
                                        static_cast<std::uint64_t>(r), t_switch,
                                        order);
      double sup = 0.0;
      double envelope = 0.0;
      bool ok = true;
      for (const auto& g : run.gap) {
        if (g.t <= t_switch + 0.5 * sc.dt) continue;
        const double gap = std::sqrt(g.gap_sq);
        sup = std::max(sup, gap);
        if (bound_applicable) {
          const double y2k = pow_int(g.max_y_norm, order);
          envelope = std::max(envelope, g.w2k_mu * (1.0 + y2k));
          if (gap > bound_C * envelope / theta + 1e-12) ok = false;
        }
      }
      sup_gap[r] = sup;
      bound_ok[r] = ok ? 1 : 0;
      if (r < n_dump) {
        dumped[r] = std::move(run.gap);
        dumped_paths[r] = run.x_run.state.buffer();
      }
    });

    {
      CsvFile gaps(ctx.file("gap_series_row" + std::to_string(si) + ".csv"),
                   {"replica", "t", "gap_sq"});
      for (std::size_t r = 0; r < dumped.size(); ++r) {
        for (const auto& g : dumped[r]) {
          gaps.cell(static_cast<long long>(r));
          gaps.cell(g.t);
          gaps.cell(g.gap_sq);
          gaps.end_row();
        }
      }
    }
    {
      std::vector<std::string> header{"replica", "t"};
      for (int i = 0; i < cfg.V.dimension(); ++i)
        header.push_back("x_" + std::to_string(i + 1));
      CsvFile paths(ctx.file("trajectory_row" + std::to_string(si) + ".csv"),
                    header);
      for (std::size_t r = 0; r < dumped_paths.size(); ++r) {
        const auto& buf = dumped_paths[r];
        for (std::size_t e = 0; e < buf.size(); ++e) {
          paths.cell(static_cast<long long>(r));
          paths.cell(buf.t[e]);
          for (double v : buf.point(e)) paths.cell(v);
          paths.end_row();
        }
      }
    }

    std::vector<double> sorted = sup_gap;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double mean =
        std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size();
    int pass = 0;
    for (char c : bound_ok) pass += c;
    const double frac = static_cast<double>(pass) / replicas;

    summary.cell(sigma);
    summary.cell(replicas);
    summary.cell(median);
    summary.cell(mean);
    summary.cell(bound_applicable ? frac : -1.0);
    summary.cell(bound_C);
    summary.cell(order);
    summary.end_row();

    medians.push_back(median);
    report["rows"].push_back({{"sigma", sigma},
                              {"median_sup_gap", median},
                              {"mean_sup_gap", mean},
                              {"bound_pass_fraction", bound_applicable ? json(frac) : json()}});
    if (bound_applicable)
      ctx.check("coupling:pathwise_bound sigma=" + fmt_sigma(sigma),
                frac >= 0.95, "pass fraction " + g17(frac));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i)
    if (medians[i] > medians[i - 1] + 1e-15) monotone = false;
  ctx.check("coupling:median_sup_gap_monotone", monotone,
            "medians in sweep order");
  report["median_sup_gap_monotone"] = monotone;
  report["t_switch"] = t_switch;
  report["horizon"] = horizon;
  write_text(ctx.file("coupling_report.json"), report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// kramers / exit_location

KramersResult run_sweep(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const DomainSpec dom = cfg.build_domain();
  const KramersOptions opts = cfg.kramers_options(ctx.workers);
  const KramersResult res = kramers_sweep(dom, opts);
  for (std::size_t si = 0; si < opts.sigmas.size(); ++si)
    ctx.note_replica_seeds(derive_seed(opts.master_seed, "kramers-row", si),
                           opts.replicas);

  {
    CsvFile csv(ctx.file("sweep.csv"),
                {"sigma", "replicas", "median_tau", "mean_tau", "q10", "q90",
                 "rate", "H", "window_delta", "in_window_fraction",
                 "timed_out_count"});
    for (const auto& row : res.rows) {
      csv.cell(row.sigma);
      csv.cell(row.replicas);
      csv.cell(row.median_tau);
      csv.cell(row.mean_tau);
      csv.cell(row.q10);
      csv.cell(row.q90);
      csv.cell(row.rate);
      csv.cell(row.H);
      csv.cell(row.window_delta);
      csv.cell(row.in_window_fraction);
      csv.cell(row.timed_out_count);
      csv.end_row();
    }
  }
  {
    std::vector<std::string> header{"sigma", "replica", "tau", "timed_out", "steps"};
    for (int i = 0; i < dom.dim(); ++i)
      header.push_back("exit_" + std::to_string(i + 1));
    CsvFile csv(ctx.file("records.csv"), header);
    for (const auto& rec : res.records) {
      csv.cell(rec.sigma);
      csv.cell(rec.replica);
      csv.cell(rec.tau);
      csv.cell(static_cast<long long>(rec.timed_out ? 1 : 0));
      csv.cell(rec.steps);
      for (double v : rec.exit_point) csv.cell(v);
      csv.end_row();
    }
  }
  ctx.check("kramers:in_window_fraction_monotone", res.window_fraction_monotone,
            "as sigma decreases");
  {
    // |rate - H| non-increasing along the sweep, one inversion allowed for
    // Monte Carlo noise.
    int inversions = 0;
    for (std::size_t i = 0; i + 1 < res.rows.size(); ++i) {
      const double a = std::abs(res.rows[i].rate - res.H);
      const double b = std::abs(res.rows[i + 1].rate - res.H);
      if (b > a + 1e-12) ++inversions;
    }
    ctx.check("kramers:rate_gap_trend", inversions <= 1,
              std::to_string(inversions) + " inversions");
  }
  for (const auto& row : res.rows)
    ctx.check("kramers:usable sigma=" + fmt_sigma(row.sigma), row.usable,
              std::to_string(row.timed_out_count) + " timed out of " +
                  std::to_string(row.replicas));
  ctx.check("kramers:domain_assumptions", res.domain_check.all_pass(),
            "flow/invariance/limit checks");
  return res;
}

void run_kramers(RunContext& ctx) { run_sweep(ctx); }

void run_exit_location(RunContext& ctx) {
  const KramersResult res = run_sweep(ctx);
  const DomainSpec dom = ctx.cfg.build_domain();
  const LocationReport rep =
      exit_location_stats(res.records, dom, ctx.cfg.exit_location.margin);
  CsvFile csv(ctx.file("location.csv"),
              {"sigma", "exit_cost_bin", "count", "frac_in_N"});
  for (const auto& bin : rep.histogram) {
    double frac = 0.0;
    for (const auto& row : rep.rows)
      if (row.sigma == bin.sigma) frac = row.frac_in_n;
    csv.cell(bin.sigma);
    csv.cell(0.5 * (bin.cost_lo + bin.cost_hi));
    csv.cell(bin.count);
    csv.cell(frac);
    csv.end_row();
  }
  ctx.check("location:n_fraction_monotone", rep.n_fraction_monotone,
            "margin " + g17(rep.margin));
  json out;
  out["H"] = rep.H;
  out["margin"] = rep.margin;
  for (const auto& row : rep.rows)
    out["rows"].push_back({{"sigma", row.sigma},
                           {"exits", row.exits},
                           {"frac_in_N", row.frac_in_n}});
  out["n_fraction_monotone"] = rep.n_fraction_monotone;
  write_text(ctx.file("location_report.json"), out.dump(2) + "\n");
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config,
                           const RunOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunContext ctx{config,
                 options.out_dir_override.empty() ? fs::path(config.output_dir)
                                                  : fs::path(options.out_dir_override),
                 options.workers > 0 ? options.workers : default_worker_count(),
                 {},
                 {},
                 {}};
  fs::create_directories(ctx.out);

  switch (config.experiment) {
    case ExperimentKind::ValidateAssumptions: run_validate(ctx); break;
    case ExperimentKind::FlowCheck: run_flow_check(ctx); break;
    case ExperimentKind::InvariantFixedPoint: run_invariant(ctx); break;
    case ExperimentKind::Stabilisation: run_stabilisation(ctx); break;
    case ExperimentKind::CouplingGap: run_coupling_gap(ctx); break;
    case ExperimentKind::Kramers: run_kramers(ctx); break;
    case ExperimentKind::ExitLocation: run_exit_location(ctx); break;
  }

  const std::string resolved = config.resolved_json();
  write_text(ctx.file("resolved_config.json"), resolved);

  std::string checks_text;
  bool all_pass = true;
  for (const auto& [label, pass, detail] : ctx.checks) {
    checks_text += (pass ? "PASS " : "FAIL ") + label + ": " + detail + "\n";
    all_pass = all_pass && pass;
  }
  write_text(ctx.file("checks.txt"), checks_text);

  RunManifest manifest;
  manifest.artifact_version = artifact_version();
  manifest.output_dir = ctx.out.string();
  manifest.checks_passed = all_pass;
  manifest.replica_seeds = ctx.replica_seeds;
  {
    // Semantic hash: the resolved config minus the output location.
    json j = json::parse(resolved);
    j.erase("output_dir");
    const std::string canon = j.dump();
    manifest.config_hash = hex64(fnv1a64_bytes(
        {reinterpret_cast<const unsigned char*>(canon.data()), canon.size()}));
  }
  for (const auto& name : ctx.outputs)
    manifest.output_checksums.emplace_back(
        name, hex64(fnv1a64_file(ctx.out / name)));
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  json mj;
  mj["config_hash"] = manifest.config_hash;
  mj["artifact_version"] = manifest.artifact_version;
  mj["checks_passed"] = manifest.checks_passed;
  mj["wall_clock_seconds"] = manifest.wall_clock_seconds;
  for (const auto& [name, sum] : manifest.output_checksums)
    mj["output_checksums"][name] = sum;
  mj["replica_seeds"] = manifest.replica_seeds;
  write_text(ctx.out / "manifest.json", mj.dump(2) + "\n");
  return manifest;
}

}  // namespace sidlab
