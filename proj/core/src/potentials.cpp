#include "sidlab/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "sidlab/errors.hpp"
#include "sidlab/seeding.hpp"

namespace sidlab {

namespace {

std::vector<std::pair<int, double>> normalize_terms(
    std::vector<std::pair<int, double>> terms) {
  std::map<int, double> merged;
  for (const auto& [p, c] : terms) {
    if (p < 2) throw UsageError("potential term powers must be >= 2");
    if (!std::isfinite(c)) throw UsageError("potential coefficient not finite");
    merged[p] += c;
  }
  std::vector<std::pair<int, double>> out(merged.begin(), merged.end());
  std::erase_if(out, [](const auto& t) { return t.second == 0.0; });
  return out;
}

double derived_convexity(const std::vector<std::pair<int, double>>& terms) {
  for (const auto& [p, c] : terms)
    if (p == 2) return std::max(0.0, 2.0 * c);
  return 0.0;
}

int derived_growth(const std::vector<std::pair<int, double>>& terms) {
  int deg = 2;
  for (const auto& [p, c] : terms) deg = std::max(deg, p);
  return deg + (deg % 2);  // 2k is even
}

}  // namespace

PotentialSpec PotentialSpec::quadratic(Vec center, double curvature) {
  Vec curvatures(center.size(), curvature);
  return quadratic_diag(std::move(center), std::move(curvatures));
}

PotentialSpec PotentialSpec::quadratic_diag(Vec center, Vec curvatures) {
  if (center.empty()) throw UsageError("potential center must be non-empty");
  if (curvatures.size() != center.size())
    throw UsageError("curvature vector does not match dimension");
  if (!all_finite(center) || !all_finite(curvatures))
    throw UsageError("quadratic parameters not finite");
  for (double k : curvatures)
    if (k <= 0.0) throw UsageError("quadratic curvature must be positive");
  PotentialSpec s;
  s.kind_ = PotentialKind::Quadratic;
  s.center_ = std::move(center);
  s.curvatures_ = std::move(curvatures);
  s.growth_degree_ = 2;
  s.convexity_ = *std::min_element(s.curvatures_.begin(), s.curvatures_.end());
  return s;
}

PotentialSpec PotentialSpec::even_poly(
    Vec center, std::vector<std::pair<int, double>> coeffs) {
  if (center.empty()) throw UsageError("potential center must be non-empty");
  if (!all_finite(center)) throw UsageError("potential center not finite");
  auto terms = normalize_terms(std::move(coeffs));
  for (const auto& [p, c] : terms)
    if (p % 2 != 0) throw UsageError("even_poly powers must be even");
  PotentialSpec s;
  s.kind_ = PotentialKind::EvenPoly;
  s.center_ = std::move(center);
  s.terms_ = std::move(terms);
  s.growth_degree_ = derived_growth(s.terms_);
  s.convexity_ = derived_convexity(s.terms_);
  return s;
}

PotentialSpec PotentialSpec::radial(int dim,
                                    std::vector<std::pair<int, double>> profile) {
  if (dim < 1) throw UsageError("radial potential needs dim >= 1");
  PotentialSpec s;
  s.kind_ = PotentialKind::Radial;
  s.center_ = Vec(dim, 0.0);
  s.terms_ = normalize_terms(std::move(profile));
  s.growth_degree_ = derived_growth(s.terms_);
  s.convexity_ = derived_convexity(s.terms_);
  return s;
}

PotentialSpec PotentialSpec::zero(int dim) {
  return even_poly(Vec(dim, 0.0), {});
}

bool PotentialSpec::is_zero() const {
  return kind_ != PotentialKind::Quadratic && terms_.empty();
}

void PotentialSpec::check_point(std::span<const double> x) const {
  if (x.size() != center_.size())
    throw UsageError("point dimension does not match potential");
  if (!all_finite(x)) throw DomainError("potential evaluated at non-finite point");
}

double PotentialSpec::value(std::span<const double> x) const {
  check_point(x);
  if (kind_ == PotentialKind::Quadratic) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - center_[i];
      s += curvatures_[i] * d * d;
    }
    return 0.5 * s;
  }
  const double r = dist(x, center_);
  double s = 0.0;
  for (const auto& [p, c] : terms_) s += c * pow_int(r, p);
  return s;
}

void PotentialSpec::gradient(std::span<const double> x,
                             std::span<double> out) const {
  check_point(x);
  if (kind_ == PotentialKind::Quadratic) {
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = curvatures_[i] * (x[i] - center_[i]);
    return;
  }
  const double r = dist(x, center_);
  // grad = (sum_p c_p p r^{p-2}) (x - center); finite at r = 0 since p >= 2,
  // and exactly zero there since x == center.
  double s = 0.0;
  for (const auto& [p, c] : terms_) s += c * p * pow_int(r, p - 2);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * (x[i] - center_[i]);
}

Vec PotentialSpec::gradient(std::span<const double> x) const {
  Vec g(x.size());
  gradient(x, g);
  return g;
}

double PotentialSpec::hessian_quadratic_form(std::span<const double> x,
                                             std::span<const double> v) const {
  check_point(x);
  if (v.size() != center_.size())
    throw UsageError("direction dimension does not match potential");
  if (kind_ == PotentialKind::Quadratic) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += curvatures_[i] * v[i] * v[i];
    return s;
  }
  const double r = dist(x, center_);
  double gpp = 0.0;  // G''(r)
  double gpr = 0.0;  // G'(r)/r, radial limit 2 c_2 at r = 0
  for (const auto& [p, c] : terms_) {
    gpp += c * p * (p - 1) * pow_int(r, p - 2);
    gpr += c * p * pow_int(r, p - 2);
  }
  if (r == 0.0) return gpr * norm_sq(v);
  double a = 0.0;  // (x-hat . v)
  for (std::size_t i = 0; i < v.size(); ++i) a += (x[i] - center_[i]) / r * v[i];
  return gpp * a * a + gpr * (norm_sq(v) - a * a);
}

double PotentialSpec::hessian_norm(std::span<const double> x) const {
  check_point(x);
  if (kind_ == PotentialKind::Quadratic)
    return *std::max_element(curvatures_.begin(), curvatures_.end());
  const double r = dist(x, center_);
  double gpp = 0.0, gpr = 0.0;
  for (const auto& [p, c] : terms_) {
    gpp += c * p * (p - 1) * pow_int(r, p - 2);
    gpr += c * p * pow_int(r, p - 2);
  }
  return std::max(std::abs(gpp), std::abs(gpr));
}

double PotentialSpec::laplacian(std::span<const double> x) const {
  check_point(x);
  const int d = dimension();
  if (kind_ == PotentialKind::Quadratic) {
    double s = 0.0;
    for (double k : curvatures_) s += k;
    return s;
  }
  const double r = dist(x, center_);
  double gpp = 0.0, gpr = 0.0;
  for (const auto& [p, c] : terms_) {
    gpp += c * p * (p - 1) * pow_int(r, p - 2);
    gpr += c * p * pow_int(r, p - 2);
  }
  return gpp + (d - 1) * gpr;
}

PotentialSpec PotentialSpec::with_declared(double convexity_lower_bound,
                                           int growth_degree) const {
  if (convexity_lower_bound < 0.0)
    throw UsageError("declared convexity bound must be >= 0");
  if (growth_degree < 2 || growth_degree % 2 != 0)
    throw UsageError("declared growth degree must be an even integer >= 2");
  PotentialSpec s = *this;
  s.convexity_ = convexity_lower_bound;
  s.growth_degree_ = growth_degree;
  return s;
}

bool ValidationReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.pass; });
}

const CheckResult* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<Vec> sample_ball_grid(const Vec& center, double radius, int count,
                                  std::uint64_t seed) {
  if (center.empty() || radius <= 0.0 || count < 1)
    throw UsageError("sample_ball_grid: bad arguments");
  const int d = static_cast<int>(center.size());
  std::vector<Vec> grid;
  grid.reserve(static_cast<std::size_t>(count) + 8 * d + 1);
  grid.push_back(center);
  if (d == 1) {
    const int n = std::max(count, 3);
    for (int i = 0; i < n; ++i) {
      const double x = center[0] - radius + 2.0 * radius * i / (n - 1);
      grid.push_back({x});
    }
    return grid;
  }
  for (int axis = 0; axis < d; ++axis) {
    for (double f : {0.25, 0.5, 0.75, 1.0}) {
      for (double sgn : {-1.0, 1.0}) {
        Vec p = center;
        p[axis] += sgn * f * radius;
        grid.push_back(std::move(p));
      }
    }
  }
  std::uint64_t ctr = seed;
  for (int i = 0; i < count; ++i) {
    Vec dir(d);
    double n2 = 0.0;
    do {
      for (int j = 0; j < d; ++j) dir[j] = normal_from_u64(splitmix64(ctr++));
      n2 = norm_sq(dir);
    } while (n2 == 0.0);
    const double u =
        (static_cast<double>(splitmix64(ctr++) >> 11) + 0.5) / 9007199254740992.0;
    const double r = radius * std::pow(u, 1.0 / d);
    const double inv = r / std::sqrt(n2);
    Vec p = center;
    for (int j = 0; j < d; ++j) p[j] += dir[j] * inv;
    grid.push_back(std::move(p));
  }
  return grid;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

ValidationReport validate_assumptions(const PotentialSpec& V,
                                      const PotentialSpec& W,
                                      const std::vector<Vec>& grid) {
  if (grid.empty()) throw ConfigError("validation grid is empty");
  const int d = V.dimension();
  if (W.dimension() != d)
    throw UsageError("V and W dimensions differ");
  const Vec& m = V.minimizer();
  double max_radius = 0.0;
  for (const auto& p : grid) {
    if (static_cast<int>(p.size()) != d)
      throw UsageError("grid point dimension mismatch");
    max_radius = std::max(max_radius, dist(p, m));
  }
  if (max_radius < 10.0 - 1e-9)
    throw ConfigError("validation grid too small: must cover radius >= 10 around m");

  ValidationReport rep;

  // Positivity and regularity (finite values and gradients, value >= 0).
  {
    double vmin = 0.0;
    bool finite = true;
    for (const auto& p : grid) {
      const double vv = V.value(p), wv = W.value(p);
      vmin = std::min({vmin, vv, wv});
      finite = finite && std::isfinite(vv) && std::isfinite(wv) &&
               all_finite(V.gradient(p)) && all_finite(W.gradient(p));
    }
    rep.checks.push_back({"positivity", finite && vmin >= -1e-12, vmin,
                          "min sampled value " + fmt(vmin)});
  }

  // Polynomial growth: max(|value|, |grad|, |hess|) <= C (1 + |x|^{2k}).
  {
    double C = 0.0;
    double max_log_q = 0.0, max_log_r = 0.0;
    double exponent = 0.0;
    // Fit the exponent on the outer half of the radius range.
    double sxx = 0.0, sxy = 0.0, sx = 0.0, sy = 0.0;
    int nfit = 0;
    const int twok = std::max(V.growth_degree(), W.growth_degree());
    for (const auto& p : grid) {
      const double r = norm(p);
      const double q =
          std::max({std::abs(V.value(p)), norm(V.gradient(p)), V.hessian_norm(p),
                    std::abs(W.value(p)), norm(W.gradient(p)), W.hessian_norm(p)});
      C = std::max(C, q / (1.0 + pow_int(r, twok)));
      if (r >= 0.5 * max_radius && q > 0.0) {
        const double lx = std::log(r), ly = std::log(q);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++nfit;
        max_log_q = std::max(max_log_q, ly);
        max_log_r = std::max(max_log_r, lx);
      }
    }
    if (nfit >= 2 && sxx * nfit - sx * sx > 0.0)
      exponent = (nfit * sxy - sx * sy) / (nfit * sxx - sx * sx);
    const bool pass = std::isfinite(C) && exponent <= twok + 0.25;
    rep.checks.push_back({"polynomial_growth", pass, C,
                          "fitted C " + fmt(C) + ", exponent " + fmt(exponent) +
                              " vs degree " + fmt(twok)});
  }

  // Uniform convexity of V and W against the declared bounds.
  auto curvature_check = [&](const PotentialSpec& P, const std::string& name) {
    double min_q = std::numeric_limits<double>::infinity();
    std::uint64_t ctr = 0x5eedull;
    for (const auto& p : grid) {
      for (int trial = 0; trial < d + 3; ++trial) {
        Vec v(d, 0.0);
        if (trial < d) {
          v[trial] = 1.0;
        } else {
          double n2 = 0.0;
          do {
            for (int j = 0; j < d; ++j) v[j] = normal_from_u64(splitmix64(ctr++));
            n2 = norm_sq(v);
          } while (n2 == 0.0);
          const double inv = 1.0 / std::sqrt(n2);
          for (double& c : v) c *= inv;
        }
        min_q = std::min(min_q, P.hessian_quadratic_form(p, v));
      }
    }
    const bool pass = min_q >= P.convexity_lower_bound() - 1e-9;
    rep.checks.push_back({name, pass, min_q,
                          "min Hessian form " + fmt(min_q) + " vs declared " +
                              fmt(P.convexity_lower_bound())});
  };
  curvature_check(V, "curvature_V");
  curvature_check(W, "curvature_W");

  // Coercivity: shell means of |grad V|^2 / V non-decreasing in radius.
  {
    std::map<long long, std::pair<double, int>> shells;  // radius key -> (sum, n)
    for (const auto& p : grid) {
      const double v = V.value(p);
      if (v <= 1e-14) continue;
      const double ratio = norm_sq(V.gradient(p)) / v;
      const long long key = std::llround(dist(p, m) * 1e6);
      auto& s = shells[key];
      s.first += ratio;
      s.second += 1;
    }
    bool monotone = shells.size() >= 2;
    double prev = -std::numeric_limits<double>::infinity();
    double last = 0.0;
    for (const auto& [key, s] : shells) {
      const double mean = s.first / s.second;
      if (mean < prev - 1e-9 * std::max(1.0, std::abs(prev))) monotone = false;
      prev = mean;
      last = mean;
    }
    rep.checks.push_back({"coercivity", monotone, last,
                          "outermost-shell ratio " + fmt(last) + " over " +
                              fmt(double(shells.size())) + " shells"});
  }

  // Lyapunov bound: fitted a = max Delta V / V over V > 0.
  {
    double a = 0.0;
    for (const auto& p : grid) {
      const double v = V.value(p);
      if (v <= 1e-14) continue;
      a = std::max(a, V.laplacian(p) / v);
    }
    rep.checks.push_back({"laplacian_bound", std::isfinite(a) && a > 0.0, a,
                          "fitted a " + fmt(a)});
  }

  // Interaction minimizer pinned to 0 with grad W(0) = 0.
  {
    const Vec origin(d, 0.0);
    const bool centered = norm(W.minimizer()) <= 1e-12;
    const bool flat = norm(W.gradient(origin)) <= 1e-12 &&
                      std::abs(W.value(origin)) <= 1e-12;
    rep.checks.push_back({"interaction_minimizer", centered && flat,
                          norm(W.minimizer()), "W minimizer and W(0), grad W(0)"});
  }

  return rep;
}

}  // namespace sidlab
