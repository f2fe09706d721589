#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pmelab {

enum class NonlinearityFlavor { PurePower, UserSupplied };

/// Pressure law P of the flow d_t rho = Laplacian P(rho), together with the
/// exponent m > 1 and the constants c0 <= c1 of the two-sided bound
/// c0 m rho^{m-1} <= P'(rho) <= c1 m rho^{m-1}.
///
/// User-supplied laws must provide P' in closed form.
class PorousNonlinearity {
 public:
  using Function = std::function<double(double)>;

  /// P(rho) = coefficient * rho^m, so c0 = c1 = coefficient.
  static PorousNonlinearity pure_power(double m, double coefficient = 1.0);

  static PorousNonlinearity user_supplied(Function value, Function derivative, double m,
                                          double c0, double c1);

  /// Sum of coefficient * rho^exponent terms; P' is differentiated term by term.
  static PorousNonlinearity polynomial(std::vector<std::pair<double, double>> terms, double m,
                                       double c0, double c1);

  double value(double rho) const;
  double derivative(double rho) const;
  /// P^{-1}(v) for v >= 0. Closed form for pure powers, bracketing root search otherwise.
  double inverse(double v) const;

  double m() const { return m_; }
  double c0() const { return c0_; }
  double c1() const { return c1_; }
  double coefficient() const { return coefficient_; }
  NonlinearityFlavor flavor() const { return flavor_; }

 private:
  PorousNonlinearity() = default;

  NonlinearityFlavor flavor_ = NonlinearityFlavor::PurePower;
  double m_ = 2.0;
  double c0_ = 1.0;
  double c1_ = 1.0;
  double coefficient_ = 1.0;
  Function value_;
  Function derivative_;
};

/// Uniformly parabolic approximation P_eps with
///   P_eps'(rho) = P'(rho) + eps            for rho in [0, 1/eps],
///   P_eps'(rho) = P'(1/eps) + eps          for rho > 1/eps,
/// and P_eps(0) = 0. For rho < 0 the law is extended linearly with slope
/// P_eps'(0), which keeps Newton iterates well defined.
class RegularizedNonlinearity {
 public:
  RegularizedNonlinearity(PorousNonlinearity base, double eps);

  const PorousNonlinearity& base() const { return base_; }
  double eps() const { return eps_; }
  double threshold() const { return threshold_; }

  double value(double rho) const;
  double derivative(double rho) const;

 private:
  PorousNonlinearity base_;
  double eps_;
  double threshold_;      // 1/eps
  double value_at_threshold_;
  double slope_beyond_;   // P'(1/eps) + eps
  double slope_at_zero_;  // P'(0) + eps
};

RegularizedNonlinearity regularize(const PorousNonlinearity& P, double eps);

/// rho P'(rho) - (1 - 1/n) P(rho).
double mccann_defect(const PorousNonlinearity& P, int n, double rho);
double mccann_defect(const RegularizedNonlinearity& P, int n, double rho);

/// Psi(rho) = integral_0^rho P(r) dr.
double potential_psi(const PorousNonlinearity& P, double rho);
double potential_psi(const RegularizedNonlinearity& P, double rho);

/// Upsilon(rho) = integral_0^rho sqrt(P'(r)) dr.
double kirchhoff_upsilon(const PorousNonlinearity& P, double rho);
double kirchhoff_upsilon(const RegularizedNonlinearity& P, double rho);

struct HypothesisCheck {
  bool pass = false;
  double worst_margin = 0.0;
  std::string detail;
};

struct HypothesisReport {
  HypothesisCheck monotone;     // P(0) = 0, strictly increasing
  HypothesisCheck power_bounds; // c0 m rho^{m-1} <= P' <= c1 m rho^{m-1}
  HypothesisCheck mccann;       // rho P' - (1 - 1/n) P >= 0
  double fitted_c0 = 0.0;
  double fitted_c1 = 0.0;

  bool all_pass() const { return monotone.pass && power_bounds.pass && mccann.pass; }
};

/// Sample-based check of the structural hypotheses on `grid` (nonempty, nonnegative).
HypothesisReport validate_hypotheses(const PorousNonlinearity& P, int n,
                                     std::span<const double> grid);

/// 0 followed by `count - 1` log-spaced points ending at 10 * rho_max.
std::vector<double> default_validation_grid(double rho_max, std::size_t count = 10000);

}  // namespace pmelab
