#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pmelab/geometry.hpp"
#include "pmelab/nonlinearity.hpp"

#include <cmath>
#include <vector>

using namespace pmelab;

namespace {

// composite Simpson, independent of the library quadrature
template <class F>
double simpson(F f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("pure power basics") {
  auto P = PorousNonlinearity::pure_power(2.0);
  CHECK(P.value(3.0) == 9.0);
  CHECK(P.derivative(3.0) == 6.0);
  CHECK(P.inverse(9.0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(P.value(-1.0), DomainError);
  CHECK_THROWS(PorousNonlinearity::pure_power(1.0));
  CHECK_THROWS(PorousNonlinearity::user_supplied([](double r) { return r * r; }, {}, 2, 1, 1));
}

TEST_CASE("regularization") {
  auto P = PorousNonlinearity::pure_power(2.0);
  auto Pe = regularize(P, 0.1);
  CHECK(Pe.value(1.0) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(Pe.value(0.0) == 0.0);
  auto Ph = regularize(P, 0.5);
  CHECK(Ph.value(4.0) == doctest::Approx(14.0).epsilon(1e-15));
  CHECK(Ph.derivative(4.0) == doctest::Approx(4.5));
  CHECK_THROWS(regularize(P, 0.0));

  for (double eps : {0.5, 0.1, 1e-3}) {
    auto R = regularize(P, eps);
    double maxdP = P.derivative(1.0 / eps) + eps;
    for (double rho = 0.0; rho < 3.0 / eps; rho += 0.01 / eps) {
      CHECK(R.derivative(rho) >= eps);
      CHECK(R.derivative(rho) <= maxdP * (1 + 1e-15));
      CHECK(R.value(rho) <= P.value(rho) + eps * rho + 1e-12);
      if (rho <= 1.0 / eps) CHECK(R.derivative(rho) >= P.derivative(rho));
    }
  }
}

TEST_CASE("McCann defect") {
  for (double m : {1.5, 2.0, 3.0}) {
    auto P = PorousNonlinearity::pure_power(m);
    for (int n : {2, 3}) {
      for (double rho : {0.0, 0.3, 2.0}) {
        CHECK(mccann_defect(P, n, rho) ==
              doctest::Approx(std::pow(rho, m) * (m - 1.0 + 1.0 / n)).epsilon(1e-14));
      }
      auto Pe = regularize(P, 0.2);
      for (double rho = 0.0; rho <= 10.0; rho += 0.01) CHECK(mccann_defect(Pe, n, rho) >= -1e-12);
    }
  }
}

TEST_CASE("potentials") {
  auto P = PorousNonlinearity::pure_power(2.0);
  CHECK(potential_psi(P, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(potential_psi(P, 0.0) == 0.0);
  CHECK(kirchhoff_upsilon(P, 1.0) == doctest::Approx(2.0 * std::sqrt(2.0) / 3.0).epsilon(1e-15));
  CHECK(kirchhoff_upsilon(P, 0.0) == 0.0);

  // generic evaluator through quadrature agrees with the closed forms
  for (double m : {1.5, 2.0, 3.0}) {
    auto power = PorousNonlinearity::pure_power(m);
    auto generic = PorousNonlinearity::polynomial({{1.0, m}}, m, 1.0, 1.0);
    for (double rho : {0.01, 0.5, 1.0, 4.0}) {
      CHECK(std::abs(potential_psi(generic, rho) - potential_psi(power, rho)) <=
            1e-10 * std::max(1.0, potential_psi(power, rho)));
      CHECK(std::abs(kirchhoff_upsilon(generic, rho) - kirchhoff_upsilon(power, rho)) <=
            1e-10 * std::max(1.0, kirchhoff_upsilon(power, rho)));
    }
  }

  auto Pe = regularize(P, 0.1);
  for (double rho : {0.5, 3.0, 10.0}) {
    const double oracle = simpson([&](double r) { return std::sqrt(2.0 * r + 0.1); }, 0.0, rho);
    CHECK(kirchhoff_upsilon(Pe, rho) == doctest::Approx(oracle).epsilon(1e-8));
    const double psi = simpson([&](double r) { return Pe.value(r); }, 0.0, rho);
    CHECK(potential_psi(Pe, rho) == doctest::Approx(psi).epsilon(1e-10));
  }
  // beyond 1/eps
  const double psi_far = simpson([&](double r) { return Pe.value(r); }, 0.0, 25.0, 50000);
  CHECK(potential_psi(Pe, 25.0) == doctest::Approx(psi_far).epsilon(1e-8));

  double prev_psi = -1, prev_ups = -1;
  for (double rho = 0.0; rho < 30.0; rho += 0.25) {
    const double a = potential_psi(Pe, rho), b = kirchhoff_upsilon(Pe, rho);
    CHECK(a >= prev_psi);
    CHECK(b >= prev_ups);
    prev_psi = a;
    prev_ups = b;
  }
}

TEST_CASE("hypothesis validation") {
  auto grid = default_validation_grid(1.0);
  CHECK(grid.size() == 10000);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == doctest::Approx(10.0));

  auto square = validate_hypotheses(PorousNonlinearity::pure_power(2.0), 3, grid);
  CHECK(square.all_pass());
  CHECK(square.fitted_c0 == doctest::Approx(1.0));
  CHECK(square.fitted_c1 == doctest::Approx(1.0));

  auto cubic = PorousNonlinearity::polynomial({{1.0, 2.0}, {1.0, 3.0}}, 2.0, 1.0, 2.0);
  auto rep = validate_hypotheses(cubic, 3, grid);
  CHECK(rep.monotone.pass);
  CHECK_FALSE(rep.power_bounds.pass);
  CHECK(rep.fitted_c1 > 2.0);

  auto negative = PorousNonlinearity::user_supplied([](double r) { return -r; },
                                                    [](double) { return -1.0; }, 2.0, 1.0, 1.0);
  auto neg = validate_hypotheses(negative, 3, grid);
  CHECK_FALSE(neg.monotone.pass);
  CHECK_FALSE(neg.all_pass());

  auto inv = PorousNonlinearity::polynomial({{1.0, 2.0}, {0.5, 3.0}}, 2.0, 1.0, 10.0);
  for (double v : {0.1, 1.0, 50.0}) CHECK(inv.value(inv.inverse(v)) == doctest::Approx(v));
}
