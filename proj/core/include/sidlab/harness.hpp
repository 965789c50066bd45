#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sidlab/exit_lab.hpp"
#include "sidlab/invariant_density.hpp"
#include "sidlab/occupation.hpp"
#include "sidlab/potentials.hpp"
#include "sidlab/sde.hpp"
#include "sidlab/seeding.hpp"

namespace sidlab {

enum class ExperimentKind {
  ValidateAssumptions,
  FlowCheck,
  InvariantFixedPoint,
  Stabilisation,
  CouplingGap,
  Kramers,
  ExitLocation,
};

std::string to_string(ExperimentKind kind);

struct DomainConfig {
  DomainKind kind = DomainKind::Interval;
  double lo = -1.0, hi = 1.0;  // interval
  Vec center;                  // ball
  double radius = 1.0;
  double level = 1.0;          // level set
  DomainSpec build(const PotentialSpec& V, const PotentialSpec& W,
                   const Vec& m) const;
};

struct StabilisationConfig {
  double kappa = 0.3;
  std::vector<double> sigmas;  // falls back to {sim.sigma}
  int replicas = 100;
  std::vector<double> checkpoints;
  int order_2k = 2;
};

struct CouplingGapConfig {
  double t_switch = 0.0;
  double horizon_factor = 10.0;
  std::vector<double> sigmas;
  int replicas = 100;
  int order_2k = 2;
  int dump_replicas = 1;  // gap series rows written per sigma
};

struct KramersConfig {
  std::vector<double> sigmas;
  int replicas = 100;
  double delta = 0.4;
  double t_max_factor = 3.0;
  double dt_cap = 1e-3;
  double dt_sigma_divisor = 100.0;
  double step_budget = 1e10;
  double buffer_cap = 1e5;
};

struct InvariantConfig {
  double sigma = 1.0;
  double damping = 0.5;
  double tol = 1e-8;
  int max_iter = 500;
  GridSpec grid{-6.0, 6.0, 2001};
};

struct FlowConfig {
  double t_end = 5.0;
  double dt = 1e-5;
  double endpoint_tol = 1e-6;
  double oracle_tol = 1e-6;  // threshold for the closed-form deviation check
};

struct ValidateConfig {
  double radius = 10.0;
  int points = 512;
};

struct ExitLocationConfig {
  double margin = 0.5;
};

/// Fully parsed, schema-validated experiment description. `resolved_json`
/// is the canonical serialization written next to the outputs and hashed
/// into the manifest.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::ValidateAssumptions;
  std::uint64_t master_seed = 0;
  std::string output_dir = "out";
  PotentialSpec V = PotentialSpec::zero(1);
  PotentialSpec W = PotentialSpec::zero(1);
  SimConfig sim;
  std::optional<DomainConfig> domain;
  StabilisationConfig stabilisation;
  CouplingGapConfig coupling_gap;
  KramersConfig kramers;
  InvariantConfig invariant;
  FlowConfig flow;
  ValidateConfig validate_cfg;
  ExitLocationConfig exit_location;
  DomainCheckOptions domain_check;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);

  /// Schema and arithmetic checks (window feasibility, step budget) with
  /// no simulation. Throws ConfigError / BudgetError / UsageError.
  void validate() const;

  std::string resolved_json() const;
  KramersOptions kramers_options(int workers) const;
  DomainSpec build_domain() const;
};

struct RunOptions {
  int workers = 0;  // 0 -> SIDLAB_WORKERS env or hardware concurrency
  std::string out_dir_override;
};

struct RunManifest {
  std::string config_hash;
  std::string artifact_version;
  std::vector<std::pair<std::string, std::string>> output_checksums;
  double wall_clock_seconds = 0.0;
  std::vector<std::uint64_t> replica_seeds;
  bool checks_passed = true;
  std::string output_dir;
};

/// Dispatches to the owning module, writes CSV/JSON outputs, a PASS/FAIL
/// check report, the resolved config, and the manifest. Assertion-style
/// check failures do not throw; hard errors do.
RunManifest run_experiment(const ExperimentConfig& config,
                           const RunOptions& options = {});

int default_worker_count();
std::string artifact_version();

}  // namespace sidlab
