#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sidlab/errors.hpp"
#include "sidlab/harness.hpp"

namespace sidlab {

using nlohmann::json;

namespace {

void expect_keys(const json& obj, const char* ctx,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(ctx) + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
  }
}

const json& req(const json& obj, const char* key, const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ConfigError(std::string("missing key '") + key + "' in " + ctx);
  return *it;
}

double num(const json& v, const char* ctx) {
  if (!v.is_number()) throw ConfigError(std::string(ctx) + " must be a number");
  return v.get<double>();
}

int integer(const json& v, const char* ctx) {
  if (!v.is_number_integer())
    throw ConfigError(std::string(ctx) + " must be an integer");
  return v.get<int>();
}

Vec vec(const json& v, const char* ctx) {
  if (!v.is_array() || v.empty())
    throw ConfigError(std::string(ctx) + " must be a non-empty array");
  Vec out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(num(e, ctx));
  return out;
}

std::vector<std::pair<int, double>> pairs(const json& v, const char* ctx) {
  if (!v.is_array()) throw ConfigError(std::string(ctx) + " must be an array");
  std::vector<std::pair<int, double>> out;
  for (const auto& e : v) {
    if (!e.is_array() || e.size() != 2)
      throw ConfigError(std::string(ctx) + " entries must be [power, coeff]");
    out.emplace_back(integer(e[0], ctx), num(e[1], ctx));
  }
  return out;
}

PotentialSpec parse_potential(const json& p, const char* ctx) {
  expect_keys(p, ctx,
              {"kind", "center", "curvature", "coeffs", "profile", "dim",
               "declared_convexity", "declared_growth_degree"});
  const std::string kind = req(p, "kind", ctx).get<std::string>();
  PotentialSpec spec = PotentialSpec::zero(1);
  if (kind == "quadratic") {
    Vec center = vec(req(p, "center", ctx), ctx);
    const json& c = req(p, "curvature", ctx);
    if (c.is_array())
      spec = PotentialSpec::quadratic_diag(std::move(center), vec(c, ctx));
    else
      spec = PotentialSpec::quadratic(std::move(center), num(c, ctx));
  } else if (kind == "even_poly") {
    spec = PotentialSpec::even_poly(vec(req(p, "center", ctx), ctx),
                                    pairs(req(p, "coeffs", ctx), ctx));
  } else if (kind == "radial") {
    spec = PotentialSpec::radial(integer(req(p, "dim", ctx), ctx),
                                 pairs(req(p, "profile", ctx), ctx));
  } else if (kind == "zero") {
    spec = PotentialSpec::zero(integer(req(p, "dim", ctx), ctx));
  } else {
    throw ConfigError("unknown potential kind '" + kind + "' in " + ctx);
  }
  if (p.contains("declared_convexity") || p.contains("declared_growth_degree")) {
    const double conv = p.contains("declared_convexity")
                            ? num(p["declared_convexity"], ctx)
                            : spec.convexity_lower_bound();
    const int deg = p.contains("declared_growth_degree")
                        ? integer(p["declared_growth_degree"], ctx)
                        : spec.growth_degree();
    spec = spec.with_declared(conv, deg);
  }
  return spec;
}

json potential_json(const PotentialSpec& s) {
  json p;
  switch (s.kind()) {
    case PotentialKind::Quadratic: {
      p["kind"] = "quadratic";
      p["center"] = s.minimizer();
      const auto k = s.quadratic_curvatures();
      p["curvature"] = std::vector<double>(k.begin(), k.end());
      break;
    }
    case PotentialKind::EvenPoly: {
      p["kind"] = s.is_zero() ? "zero" : "even_poly";
      if (s.is_zero()) {
        p["dim"] = s.dimension();
      } else {
        p["center"] = s.minimizer();
        p["coeffs"] = s.terms();
      }
      break;
    }
    case PotentialKind::Radial:
      p["kind"] = "radial";
      p["dim"] = s.dimension();
      p["profile"] = s.terms();
      break;
  }
  p["declared_convexity"] = s.convexity_lower_bound();
  p["declared_growth_degree"] = s.growth_degree();
  return p;
}

ExperimentKind parse_kind(const std::string& s) {
  if (s == "validate_assumptions") return ExperimentKind::ValidateAssumptions;
  if (s == "flow_check") return ExperimentKind::FlowCheck;
  if (s == "invariant_fixed_point") return ExperimentKind::InvariantFixedPoint;
  if (s == "stabilisation") return ExperimentKind::Stabilisation;
  if (s == "coupling_gap") return ExperimentKind::CouplingGap;
  if (s == "kramers") return ExperimentKind::Kramers;
  if (s == "exit_location") return ExperimentKind::ExitLocation;
  throw ConfigError("unknown experiment '" + s + "'");
}

std::vector<double> numbers(const json& v, const char* ctx) {
  if (!v.is_array()) throw ConfigError(std::string(ctx) + " must be an array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(num(e, ctx));
  return out;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::ValidateAssumptions: return "validate_assumptions";
    case ExperimentKind::FlowCheck: return "flow_check";
    case ExperimentKind::InvariantFixedPoint: return "invariant_fixed_point";
    case ExperimentKind::Stabilisation: return "stabilisation";
    case ExperimentKind::CouplingGap: return "coupling_gap";
    case ExperimentKind::Kramers: return "kramers";
    case ExperimentKind::ExitLocation: return "exit_location";
  }
  return "?";
}

DomainSpec DomainConfig::build(const PotentialSpec& V, const PotentialSpec& W,
                               const Vec& m) const {
  switch (kind) {
    case DomainKind::Interval:
      return DomainSpec::interval(lo, hi, V, W, m);
    case DomainKind::Ball:
      return DomainSpec::ball(center.empty() ? m : center, radius, V, W, m);
    case DomainKind::LevelSet:
      return DomainSpec::level_set(level, V, W, m);
  }
  throw ConfigError("bad domain kind");
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  expect_keys(j, "config",
              {"experiment", "master_seed", "output_dir", "potentials", "sim",
               "domain", "stabilisation", "coupling_gap", "kramers",
               "invariant", "flow", "validate", "exit_location",
               "domain_check"});
  ExperimentConfig cfg;
  cfg.experiment = parse_kind(req(j, "experiment", "config").get<std::string>());
  cfg.master_seed = req(j, "master_seed", "config").get<std::uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();

  const json& pots = req(j, "potentials", "config");
  expect_keys(pots, "potentials", {"V", "W"});
  cfg.V = parse_potential(req(pots, "V", "potentials.V"), "potentials.V");
  cfg.W = parse_potential(req(pots, "W", "potentials.W"), "potentials.W");

  if (j.contains("sim")) {
    const json& s = j["sim"];
    expect_keys(s, "sim", {"sigma", "dt", "t_end", "x0", "decimation_stride",
                           "warmup_steps"});
    if (s.contains("sigma")) cfg.sim.sigma = num(s["sigma"], "sim.sigma");
    if (s.contains("dt")) cfg.sim.dt = num(s["dt"], "sim.dt");
    if (s.contains("t_end")) cfg.sim.t_end = num(s["t_end"], "sim.t_end");
    if (s.contains("x0")) cfg.sim.x0 = vec(s["x0"], "sim.x0");
    if (s.contains("decimation_stride"))
      cfg.sim.decimation_stride = integer(s["decimation_stride"], "sim.decimation_stride");
    if (s.contains("warmup_steps"))
      cfg.sim.warmup_steps = integer(s["warmup_steps"], "sim.warmup_steps");
  }
  if (cfg.sim.x0.empty()) cfg.sim.x0 = cfg.V.minimizer();

  if (j.contains("domain")) {
    const json& d = j["domain"];
    expect_keys(d, "domain", {"kind", "lo", "hi", "center", "radius", "level"});
    DomainConfig dc;
    const std::string kind = req(d, "kind", "domain").get<std::string>();
    if (kind == "interval") {
      dc.kind = DomainKind::Interval;
      dc.lo = num(req(d, "lo", "domain"), "domain.lo");
      dc.hi = num(req(d, "hi", "domain"), "domain.hi");
    } else if (kind == "ball") {
      dc.kind = DomainKind::Ball;
      if (d.contains("center")) dc.center = vec(d["center"], "domain.center");
      dc.radius = num(req(d, "radius", "domain"), "domain.radius");
    } else if (kind == "level_set") {
      dc.kind = DomainKind::LevelSet;
      dc.level = num(req(d, "level", "domain"), "domain.level");
    } else {
      throw ConfigError("unknown domain kind '" + kind + "'");
    }
    cfg.domain = dc;
  }

  if (j.contains("stabilisation")) {
    const json& s = j["stabilisation"];
    expect_keys(s, "stabilisation",
                {"kappa", "sigmas", "replicas", "checkpoints", "order_2k"});
    if (s.contains("kappa")) cfg.stabilisation.kappa = num(s["kappa"], "kappa");
    if (s.contains("sigmas")) cfg.stabilisation.sigmas = numbers(s["sigmas"], "sigmas");
    if (s.contains("replicas"))
      cfg.stabilisation.replicas = integer(s["replicas"], "replicas");
    if (s.contains("checkpoints"))
      cfg.stabilisation.checkpoints = numbers(s["checkpoints"], "checkpoints");
    if (s.contains("order_2k"))
      cfg.stabilisation.order_2k = integer(s["order_2k"], "order_2k");
  }

  if (j.contains("coupling_gap")) {
    const json& s = j["coupling_gap"];
    expect_keys(s, "coupling_gap",
                {"t_switch", "horizon_factor", "sigmas", "replicas", "order_2k",
                 "dump_replicas"});
    cfg.coupling_gap.t_switch = num(req(s, "t_switch", "coupling_gap"), "t_switch");
    if (s.contains("horizon_factor"))
      cfg.coupling_gap.horizon_factor = num(s["horizon_factor"], "horizon_factor");
    if (s.contains("sigmas")) cfg.coupling_gap.sigmas = numbers(s["sigmas"], "sigmas");
    if (s.contains("replicas"))
      cfg.coupling_gap.replicas = integer(s["replicas"], "replicas");
    if (s.contains("order_2k"))
      cfg.coupling_gap.order_2k = integer(s["order_2k"], "order_2k");
    if (s.contains("dump_replicas"))
      cfg.coupling_gap.dump_replicas = integer(s["dump_replicas"], "dump_replicas");
  }

  if (j.contains("kramers")) {
    const json& s = j["kramers"];
    expect_keys(s, "kramers",
                {"sigmas", "replicas", "delta", "t_max_factor", "dt_cap",
                 "dt_sigma_divisor", "step_budget", "buffer_cap"});
    cfg.kramers.sigmas = numbers(req(s, "sigmas", "kramers"), "sigmas");
    if (s.contains("replicas")) cfg.kramers.replicas = integer(s["replicas"], "replicas");
    if (s.contains("delta")) cfg.kramers.delta = num(s["delta"], "delta");
    if (s.contains("t_max_factor"))
      cfg.kramers.t_max_factor = num(s["t_max_factor"], "t_max_factor");
    if (s.contains("dt_cap")) cfg.kramers.dt_cap = num(s["dt_cap"], "dt_cap");
    if (s.contains("dt_sigma_divisor"))
      cfg.kramers.dt_sigma_divisor = num(s["dt_sigma_divisor"], "dt_sigma_divisor");
    if (s.contains("step_budget"))
      cfg.kramers.step_budget = num(s["step_budget"], "step_budget");
    if (s.contains("buffer_cap"))
      cfg.kramers.buffer_cap = num(s["buffer_cap"], "buffer_cap");
  }

  if (j.contains("invariant")) {
    const json& s = j["invariant"];
    expect_keys(s, "invariant", {"sigma", "damping", "tol", "max_iter", "grid"});
    if (s.contains("sigma")) cfg.invariant.sigma = num(s["sigma"], "sigma");
    if (s.contains("damping")) cfg.invariant.damping = num(s["damping"], "damping");
    if (s.contains("tol")) cfg.invariant.tol = num(s["tol"], "tol");
    if (s.contains("max_iter")) cfg.invariant.max_iter = integer(s["max_iter"], "max_iter");
    if (s.contains("grid")) {
      const json& g = s["grid"];
      expect_keys(g, "invariant.grid", {"lo", "hi", "n"});
      cfg.invariant.grid.lo = num(req(g, "lo", "grid"), "grid.lo");
      cfg.invariant.grid.hi = num(req(g, "hi", "grid"), "grid.hi");
      cfg.invariant.grid.n = integer(req(g, "n", "grid"), "grid.n");
    }
  }

  if (j.contains("flow")) {
    const json& s = j["flow"];
    expect_keys(s, "flow", {"t_end", "dt", "endpoint_tol", "oracle_tol"});
    if (s.contains("t_end")) cfg.flow.t_end = num(s["t_end"], "flow.t_end");
    if (s.contains("dt")) cfg.flow.dt = num(s["dt"], "flow.dt");
    if (s.contains("endpoint_tol"))
      cfg.flow.endpoint_tol = num(s["endpoint_tol"], "flow.endpoint_tol");
    if (s.contains("oracle_tol"))
      cfg.flow.oracle_tol = num(s["oracle_tol"], "flow.oracle_tol");
  }

  if (j.contains("validate")) {
    const json& s = j["validate"];
    expect_keys(s, "validate", {"radius", "points"});
    if (s.contains("radius")) cfg.validate_cfg.radius = num(s["radius"], "radius");
    if (s.contains("points")) cfg.validate_cfg.points = integer(s["points"], "points");
  }

  if (j.contains("exit_location")) {
    const json& s = j["exit_location"];
    expect_keys(s, "exit_location", {"margin"});
    if (s.contains("margin")) cfg.exit_location.margin = num(s["margin"], "margin");
  }

  if (j.contains("domain_check")) {
    const json& s = j["domain_check"];
    expect_keys(s, "domain_check",
                {"horizon", "dt", "boundary_count", "proximity_tol",
                 "interior_shrink"});
    if (s.contains("horizon")) cfg.domain_check.horizon = num(s["horizon"], "horizon");
    if (s.contains("dt")) cfg.domain_check.dt = num(s["dt"], "dt");
    if (s.contains("boundary_count"))
      cfg.domain_check.boundary_count = integer(s["boundary_count"], "boundary_count");
    if (s.contains("proximity_tol"))
      cfg.domain_check.proximity_tol = num(s["proximity_tol"], "proximity_tol");
    if (s.contains("interior_shrink"))
      cfg.domain_check.interior_shrink = num(s["interior_shrink"], "interior_shrink");
  }

  cfg.validate();
  return cfg;
}

DomainSpec ExperimentConfig::build_domain() const {
  if (!domain) throw ConfigError("experiment requires a domain section");
  return domain->build(V, W, V.minimizer());
}

KramersOptions ExperimentConfig::kramers_options(int workers) const {
  KramersOptions o;
  o.sigmas = kramers.sigmas;
  o.replicas = kramers.replicas;
  o.dt_policy = DtPolicy{kramers.dt_cap, kramers.dt_sigma_divisor};
  o.t_max_policy = TmaxPolicy{kramers.t_max_factor};
  o.delta = kramers.delta;
  o.x0 = sim.x0;
  o.master_seed = master_seed;
  o.workers = workers;
  o.step_budget = kramers.step_budget;
  o.buffer_cap = kramers.buffer_cap;
  o.warmup_steps = sim.warmup_steps;
  o.domain_check = domain_check;
  return o;
}

void ExperimentConfig::validate() const {
  if (V.dimension() != W.dimension())
    throw ConfigError("V and W dimensions differ");
  if (norm(W.minimizer()) > 1e-12)
    throw ConfigError("interaction potential W must be minimized at 0");
  const int d = V.dimension();
  if (static_cast<int>(sim.x0.size()) != d)
    throw ConfigError("sim.x0 dimension does not match the potentials");

  switch (experiment) {
    case ExperimentKind::ValidateAssumptions:
      if (validate_cfg.radius < 10.0)
        throw ConfigError("validate.radius must be >= 10");
      if (validate_cfg.points < 8)
        throw ConfigError("validate.points must be >= 8");
      break;
    case ExperimentKind::FlowCheck:
      if (!(flow.dt > 0.0) || !(flow.t_end > flow.dt))
        throw ConfigError("flow needs 0 < dt < t_end");
      break;
    case ExperimentKind::InvariantFixedPoint:
      if (d != 1) throw ConfigError("invariant_fixed_point is 1-D only");
      break;
    case ExperimentKind::Stabilisation: {
      sim.validate();
      if (stabilisation.checkpoints.empty())
        throw ConfigError("stabilisation.checkpoints must be non-empty");
      if (stabilisation.replicas < 30)
        throw ConfigError("stabilisation.replicas must be >= 30");
      if (stabilisation.checkpoints.back() > sim.t_end + 1e-9)
        throw ConfigError("stabilisation checkpoints exceed sim.t_end");
      break;
    }
    case ExperimentKind::CouplingGap: {
      sim.validate();
      if (!(coupling_gap.t_switch > 0.0))
        throw ConfigError("coupling_gap.t_switch must be > 0");
      if (coupling_gap.sigmas.empty())
        throw ConfigError("coupling_gap.sigmas must be non-empty");
      if (coupling_gap.replicas < 1)
        throw ConfigError("coupling_gap.replicas must be >= 1");
      break;
    }
    case ExperimentKind::Kramers:
    case ExperimentKind::ExitLocation: {
      if (!domain) throw ConfigError("kramers/exit_location needs a domain");
      if (kramers.sigmas.empty())
        throw ConfigError("kramers.sigmas must be non-empty");
      const DomainSpec dom = build_domain();
      const KramersOptions o = kramers_options(1);
      // Window feasibility and worst-case budget, before any simulation.
      const double H = exit_cost(dom).H;
      double worst = 0.0;
      double prev = std::numeric_limits<double>::infinity();
      for (double s : o.sigmas) {
        if (!(s > 0.0) || !(s < prev))
          throw ConfigError("kramers.sigmas must be positive and strictly decreasing");
        prev = s;
        const double t_max = o.t_max_policy(s, H, o.delta);
        const double win_hi = std::exp(2.0 * (H + o.delta) / (s * s));
        if (!std::isfinite(t_max) || !std::isfinite(win_hi))
          throw ConfigError("sigma too small: exit window overflows");
        if (t_max < win_hi)
          throw ConfigError("t_max below exp(2(H+delta)/sigma^2): window not observable");
        worst += o.replicas * (t_max / o.dt_policy(s));
      }
      if (worst > o.step_budget)
        throw BudgetError("worst-case Euler steps exceed kramers.step_budget");
      const Vec start = o.x0.empty() ? dom.m() : o.x0;
      if (!dom.contains(start))
        throw ConfigError("start point lies outside the domain");
      break;
    }
  }
}

std::string ExperimentConfig::resolved_json() const {
  json j;
  j["experiment"] = to_string(experiment);
  j["master_seed"] = master_seed;
  j["output_dir"] = output_dir;
  j["potentials"]["V"] = potential_json(V);
  j["potentials"]["W"] = potential_json(W);
  j["sim"] = {{"sigma", sim.sigma},
              {"dt", sim.dt},
              {"t_end", sim.t_end},
              {"x0", sim.x0},
              {"decimation_stride", sim.decimation_stride},
              {"warmup_steps", sim.warmup_steps}};
  if (domain) {
    json d;
    switch (domain->kind) {
      case DomainKind::Interval:
        d = {{"kind", "interval"}, {"lo", domain->lo}, {"hi", domain->hi}};
        break;
      case DomainKind::Ball:
        d = {{"kind", "ball"},
             {"center", domain->center.empty() ? V.minimizer() : domain->center},
             {"radius", domain->radius}};
        break;
      case DomainKind::LevelSet:
        d = {{"kind", "level_set"}, {"level", domain->level}};
        break;
    }
    j["domain"] = d;
  }
  j["stabilisation"] = {{"kappa", stabilisation.kappa},
                        {"sigmas", stabilisation.sigmas},
                        {"replicas", stabilisation.replicas},
                        {"checkpoints", stabilisation.checkpoints},
                        {"order_2k", stabilisation.order_2k}};
  j["coupling_gap"] = {{"t_switch", coupling_gap.t_switch},
                       {"horizon_factor", coupling_gap.horizon_factor},
                       {"sigmas", coupling_gap.sigmas},
                       {"replicas", coupling_gap.replicas},
                       {"order_2k", coupling_gap.order_2k},
                       {"dump_replicas", coupling_gap.dump_replicas}};
  j["kramers"] = {{"sigmas", kramers.sigmas},
                  {"replicas", kramers.replicas},
                  {"delta", kramers.delta},
                  {"t_max_factor", kramers.t_max_factor},
                  {"dt_cap", kramers.dt_cap},
                  {"dt_sigma_divisor", kramers.dt_sigma_divisor},
                  {"step_budget", kramers.step_budget},
                  {"buffer_cap", kramers.buffer_cap}};
  j["invariant"] = {{"sigma", invariant.sigma},
                    {"damping", invariant.damping},
                    {"tol", invariant.tol},
                    {"max_iter", invariant.max_iter},
                    {"grid", {{"lo", invariant.grid.lo},
                              {"hi", invariant.grid.hi},
                              {"n", invariant.grid.n}}}};
  j["flow"] = {{"t_end", flow.t_end},
               {"dt", flow.dt},
               {"endpoint_tol", flow.endpoint_tol},
               {"oracle_tol", flow.oracle_tol}};
  j["validate"] = {{"radius", validate_cfg.radius},
                   {"points", validate_cfg.points}};
  j["exit_location"] = {{"margin", exit_location.margin}};
  j["domain_check"] = {{"horizon", domain_check.horizon},
                       {"dt", domain_check.dt},
                       {"boundary_count", domain_check.boundary_count},
                       {"proximity_tol", domain_check.proximity_tol},
                       {"interior_shrink", domain_check.interior_shrink}};
  return j.dump(2) + "\n";
}

}  // namespace sidlab
