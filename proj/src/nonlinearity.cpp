#include "pmelab/nonlinearity.hpp"

#include "pmelab/geometry.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pmelab {

namespace {

constexpr double kQuadratureTolerance = 1e-12;

template <class F>
double adaptive_integral(F&& f, double a, double b) {
  if (b <= a) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 15>::integrate(f, a, b, 20, kQuadratureTolerance);
}

void require_nonnegative(double rho, const char* what) {
  if (rho < 0.0 || std::isnan(rho)) {
    throw DomainError(std::string(what) + ": density must be >= 0");
  }
}

void check_exponent_and_bounds(double m, double c0, double c1) {
  if (!(m > 1.0)) throw std::invalid_argument("nonlinearity exponent m must be > 1");
  if (!(c0 > 0.0) || !(c1 >= c0)) {
    throw std::invalid_argument("nonlinearity bounds need 0 < c0 <= c1");
  }
}

}  // namespace

PorousNonlinearity PorousNonlinearity::pure_power(double m, double coefficient) {
  check_exponent_and_bounds(m, coefficient, coefficient);
  PorousNonlinearity P;
  P.flavor_ = NonlinearityFlavor::PurePower;
  P.m_ = m;
  P.c0_ = P.c1_ = P.coefficient_ = coefficient;
  P.value_ = [m, coefficient](double rho) { return coefficient * std::pow(rho, m); };
  P.derivative_ = [m, coefficient](double rho) {
    return rho == 0.0 ? 0.0 : coefficient * m * std::pow(rho, m - 1.0);
  };
  return P;
}

PorousNonlinearity PorousNonlinearity::user_supplied(Function value, Function derivative,
                                                     double m, double c0, double c1) {
  if (!value || !derivative) {
    throw std::invalid_argument("user-supplied nonlinearity needs both P and P'");
  }
  check_exponent_and_bounds(m, c0, c1);
  PorousNonlinearity P;
  P.flavor_ = NonlinearityFlavor::UserSupplied;
  P.m_ = m;
  P.c0_ = c0;
  P.c1_ = c1;
  P.value_ = std::move(value);
  P.derivative_ = std::move(derivative);
  return P;
}

PorousNonlinearity PorousNonlinearity::polynomial(std::vector<std::pair<double, double>> terms,
                                                  double m, double c0, double c1) {
  if (terms.empty()) throw std::invalid_argument("polynomial nonlinearity needs terms");
  for (const auto& [coef, power] : terms) {
    if (!(power > 0.0) || !std::isfinite(coef)) {
      throw std::invalid_argument("polynomial terms need finite coefficients and positive powers");
    }
  }
  auto value = [terms](double rho) {
    double s = 0.0;
    for (const auto& [coef, power] : terms) s += coef * std::pow(rho, power);
    return s;
  };
  auto derivative = [terms](double rho) {
    double s = 0.0;
    for (const auto& [coef, power] : terms) {
      if (power == 1.0) {
        s += coef;
      } else if (rho > 0.0) {
        s += coef * power * std::pow(rho, power - 1.0);
      } else if (power < 1.0) {
        return std::numeric_limits<double>::infinity();
      }
    }
    return s;
  };
  return user_supplied(value, derivative, m, c0, c1);
}

double PorousNonlinearity::value(double rho) const {
  require_nonnegative(rho, "P");
  return value_(rho);
}

double PorousNonlinearity::derivative(double rho) const {
  require_nonnegative(rho, "P'");
  return derivative_(rho);
}

double PorousNonlinearity::inverse(double v) const {
  if (v < 0.0) throw DomainError("P^{-1}: argument must be >= 0");
  if (v == 0.0) return 0.0;
  if (flavor_ == NonlinearityFlavor::PurePower) return std::pow(v / coefficient_, 1.0 / m_);
  double hi = std::pow(v / c0_, 1.0 / m_);  // P(hi) >= v by the lower bound on P'
  if (!(hi > 0.0) || !std::isfinite(hi)) hi = 1.0;
  while (value_(hi) < v) hi *= 2.0;
  std::uintmax_t iters = 200;
  auto [lo_root, hi_root] = boost::math::tools::toms748_solve(
      [this, v](double x) { return value_(x) - v; }, 0.0, hi, -v, value_(hi) - v,
      boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (lo_root + hi_root);
}

RegularizedNonlinearity::RegularizedNonlinearity(PorousNonlinearity base, double eps)
    : base_(std::move(base)), eps_(eps), threshold_(0.0) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw std::invalid_argument("regularization parameter eps must be > 0");
  }
  threshold_ = 1.0 / eps_;
  value_at_threshold_ = base_.value(threshold_) - base_.value(0.0) + eps_ * threshold_;
  slope_beyond_ = base_.derivative(threshold_) + eps_;
  slope_at_zero_ = base_.derivative(0.0) + eps_;
}

double RegularizedNonlinearity::value(double rho) const {
  if (rho < 0.0) return slope_at_zero_ * rho;
  if (rho <= threshold_) return base_.value(rho) - base_.value(0.0) + eps_ * rho;
  return value_at_threshold_ + slope_beyond_ * (rho - threshold_);
}

double RegularizedNonlinearity::derivative(double rho) const {
  if (rho < 0.0) return slope_at_zero_;
  if (rho <= threshold_) return base_.derivative(rho) + eps_;
  return slope_beyond_;
}

RegularizedNonlinearity regularize(const PorousNonlinearity& P, double eps) {
  return RegularizedNonlinearity(P, eps);
}

double mccann_defect(const PorousNonlinearity& P, int n, double rho) {
  require_nonnegative(rho, "mccann_defect");
  return rho * P.derivative(rho) - (1.0 - 1.0 / n) * P.value(rho);
}

double mccann_defect(const RegularizedNonlinearity& P, int n, double rho) {
  require_nonnegative(rho, "mccann_defect");
  return rho * P.derivative(rho) - (1.0 - 1.0 / n) * P.value(rho);
}

double potential_psi(const PorousNonlinearity& P, double rho) {
  require_nonnegative(rho, "potential_psi");
  if (P.flavor() == NonlinearityFlavor::PurePower) {
    return P.coefficient() * std::pow(rho, P.m() + 1.0) / (P.m() + 1.0);
  }
  return adaptive_integral([&P](double r) { return P.value(r); }, 0.0, rho);
}

double potential_psi(const RegularizedNonlinearity& P, double rho) {
  require_nonnegative(rho, "potential_psi");
  const double a = P.threshold();
  const double eps = P.eps();
  const double p0 = P.base().value(0.0);
  auto inner = [&](double x) { return potential_psi(P.base(), x) - p0 * x + 0.5 * eps * x * x; };
  if (rho <= a) return inner(rho);
  const double d = rho - a;
  return inner(a) + P.value(a) * d + 0.5 * P.derivative(rho) * d * d;
}

double kirchhoff_upsilon(const PorousNonlinearity& P, double rho) {
  require_nonnegative(rho, "kirchhoff_upsilon");
  if (P.flavor() == NonlinearityFlavor::PurePower) {
    const double m = P.m();
    return std::sqrt(P.coefficient() * m) * 2.0 / (m + 1.0) * std::pow(rho, 0.5 * (m + 1.0));
  }
  return adaptive_integral([&P](double r) { return std::sqrt(P.derivative(r)); }, 0.0, rho);
}

double kirchhoff_upsilon(const RegularizedNonlinearity& P, double rho) {
  require_nonnegative(rho, "kirchhoff_upsilon");
  const double a = P.threshold();
  auto inner = [&](double x) {
    return adaptive_integral([&P](double r) { return std::sqrt(P.derivative(r)); }, 0.0, x);
  };
  if (rho <= a) return inner(rho);
  return inner(a) + std::sqrt(P.derivative(rho)) * (rho - a);
}

HypothesisReport validate_hypotheses(const PorousNonlinearity& P, int n,
                                     std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("validate_hypotheses: empty grid");
  std::vector<double> rho(grid.begin(), grid.end());
  for (double r : rho) {
    if (r < 0.0 || !std::isfinite(r)) {
      throw std::invalid_argument("validate_hypotheses: grid must be finite and nonnegative");
    }
  }
  std::sort(rho.begin(), rho.end());
  rho.erase(std::unique(rho.begin(), rho.end()), rho.end());

  HypothesisReport report;

  // Monotonicity and P(0) = 0.
  const double p0 = P.value(0.0);
  double worst_step = std::numeric_limits<double>::infinity();
  double prev = p0;
  double prev_rho = 0.0;
  for (double r : rho) {
    if (r == 0.0) continue;
    const double p = P.value(r);
    worst_step = std::min(worst_step, p - prev);
    if (!(p > prev)) {
      std::ostringstream os;
      os << "P not strictly increasing on [" << prev_rho << ", " << r << "]";
      report.monotone.detail = os.str();
    }
    prev = p;
    prev_rho = r;
  }
  report.monotone.worst_margin = std::min(worst_step, -std::abs(p0));
  report.monotone.pass = std::abs(p0) <= 1e-14 && worst_step > 0.0;
  if (std::abs(p0) > 1e-14) report.monotone.detail = "P(0) != 0";

  // Two-sided power bounds on P'.
  const double m = P.m();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double r : rho) {
    if (r == 0.0) continue;
    const double ratio = P.derivative(r) / (m * std::pow(r, m - 1.0));
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  report.fitted_c0 = lo;
  report.fitted_c1 = hi;
  const double rel = 1e-9;
  const bool lower_ok = lo >= P.c0() * (1.0 - rel);
  const bool upper_ok = hi <= P.c1() * (1.0 + rel);
  report.power_bounds.pass = lower_ok && upper_ok;
  report.power_bounds.worst_margin = std::min(lo - P.c0(), P.c1() - hi);
  {
    std::ostringstream os;
    os << "fitted c0=" << lo << " c1=" << hi << " declared c0=" << P.c0() << " c1=" << P.c1();
    if (!lower_ok) os << "; lower bound violated";
    if (!upper_ok) os << "; upper bound violated";
    report.power_bounds.detail = os.str();
  }

  // McCann-type condition.
  double worst = std::numeric_limits<double>::infinity();
  for (double r : rho) worst = std::min(worst, mccann_defect(P, n, r));
  report.mccann.worst_margin = worst;
  report.mccann.pass = worst >= -1e-12;
  if (!report.mccann.pass) report.mccann.detail = "rho P' - (1 - 1/n) P < 0 somewhere on the grid";

  return report;
}

std::vector<double> default_validation_grid(double rho_max, std::size_t count) {
  if (!(rho_max > 0.0)) throw std::invalid_argument("default_validation_grid: rho_max must be > 0");
  if (count < 2) throw std::invalid_argument("default_validation_grid: need at least 2 points");
  std::vector<double> grid(count);
  grid[0] = 0.0;
  const double top = 10.0 * rho_max;
  const double bottom = top * 1e-8;
  const double step = std::log(top / bottom) / static_cast<double>(count - 2);
  for (std::size_t i = 1; i < count; ++i) {
    grid[i] = bottom * std::exp(step * static_cast<double>(i - 1));
  }
  grid.back() = top;
  return grid;
}

}  // namespace pmelab
