#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sidlab/vec.hpp"

namespace sidlab {

enum class PotentialKind { Quadratic, EvenPoly, Radial };

/// A confinement (V) or interaction (W) potential from a closed family:
/// diagonal quadratics, even polynomials of |x - center|, and radial
/// profiles G(|x|). The family is closed so gradients, Hessians and
/// Laplacians are exact, which the exit-cost and flow oracles rely on.
///
/// Values are anchored so that value(minimizer) == 0.
class PotentialSpec {
 public:
  /// (curvature/2)|x - center|^2, curvature > 0.
  static PotentialSpec quadratic(Vec center, double curvature);
  /// Diagonal quadratic sum_i (k_i/2)(x_i - c_i)^2, all k_i > 0.
  static PotentialSpec quadratic_diag(Vec center, Vec curvatures);
  /// sum_p c_p |x - center|^p over even powers p >= 2. Empty list -> 0.
  static PotentialSpec even_poly(Vec center,
                                 std::vector<std::pair<int, double>> coeffs);
  /// G(|x|) with polynomial profile G(r) = sum_p c_p r^p, integer p >= 2.
  /// Centered at the origin.
  static PotentialSpec radial(int dim,
                              std::vector<std::pair<int, double>> profile);
  /// The identically-zero potential (no interaction).
  static PotentialSpec zero(int dim);

  PotentialKind kind() const { return kind_; }
  int dimension() const { return static_cast<int>(center_.size()); }
  /// Degree 2k of the dominating polynomial.
  int growth_degree() const { return growth_degree_; }
  /// Declared uniform-convexity constant (rho for V, alpha for W).
  double convexity_lower_bound() const { return convexity_; }
  const Vec& minimizer() const { return center_; }
  bool is_zero() const;
  /// True for (diagonal) quadratics; enables the O(1) interaction fast path.
  bool is_quadratic() const { return kind_ == PotentialKind::Quadratic; }
  std::span<const double> quadratic_curvatures() const { return curvatures_; }
  const std::vector<std::pair<int, double>>& terms() const { return terms_; }

  double value(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> out) const;
  Vec gradient(std::span<const double> x) const;
  /// v^T Hess(x) v, exact.
  double hessian_quadratic_form(std::span<const double> x,
                                std::span<const double> v) const;
  /// Operator norm of Hess(x), exact.
  double hessian_norm(std::span<const double> x) const;
  double laplacian(std::span<const double> x) const;

  /// Copy with externally declared constants (used by the validators to
  /// check a user's claim instead of the derived default).
  PotentialSpec with_declared(double convexity_lower_bound,
                              int growth_degree) const;

 private:
  PotentialSpec() = default;
  void check_point(std::span<const double> x) const;

  PotentialKind kind_ = PotentialKind::EvenPoly;
  Vec center_;
  Vec curvatures_;                            // quadratic only
  std::vector<std::pair<int, double>> terms_; // (power, coeff), radial about center_
  int growth_degree_ = 2;
  double convexity_ = 0.0;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double fitted = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool all_pass() const;
  const CheckResult* find(std::string_view name) const;
};

/// Checks the standing assumptions on (V, W) over a sample grid:
/// positivity/regularity, polynomial growth (fitted C and exponent),
/// uniform convexity, coercivity ratio |grad V|^2/V non-decreasing in the
/// radius, Laplacian bound Delta V <= a V (fitted a), and the pinned
/// interaction minimizer W(0) = min W = 0.
/// The grid must reach radius >= 10 around V's minimizer.
ValidationReport validate_assumptions(const PotentialSpec& V,
                                      const PotentialSpec& W,
                                      const std::vector<Vec>& grid);

/// Deterministic sample grid covering the closed ball of the given radius:
/// the center, axis points, and seeded quasi-random interior points.
std::vector<Vec> sample_ball_grid(const Vec& center, double radius, int count,
                                  std::uint64_t seed);

}  // namespace sidlab
