#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pmelab/pme_solver.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

using namespace pmelab;

namespace {

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= x.size(), my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// explicit Euler for the same finite-volume operator
std::vector<double> explicit_reference(const DensityField& rho0, const RegularizedNonlinearity& Pe,
                                       double T, double dt) {
  const RadialGrid& g = *rho0.grid;
  std::vector<double> rho = rho0.values, p(g.size());
  const int steps = static_cast<int>(std::lround(T / dt));
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < g.size(); ++i) p[i] = Pe.value(rho[i]);
    std::vector<double> next(rho);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double div = 0.0;
      if (i + 1 < g.size()) div += g.face_area(i + 1) / g.dr() * (p[i + 1] - p[i]);
      if (i > 0) div -= g.face_area(i) / g.dr() * (p[i] - p[i - 1]);
      next[i] += dt * div / g.volume(i);
    }
    rho.swap(next);
  }
  return rho;
}

DensityField bump(GridPtr g, double height, double radius) {
  return DensityField::from_function(g, [=](double r) {
    return r < radius ? height * std::pow(std::cos(0.5 * M_PI * r / radius), 2) : 0.0;
  });
}

}  // namespace

TEST_CASE("radial grid") {
  for (double K : {0.0, 1.0}) {
    for (int n : {2, 3}) {
      auto g = make_grid(n, K, 3.0, 500);
      CHECK(g->total_volume() ==
            doctest::Approx(g->manifold().ball_volume(3.0)).epsilon(1e-10));
      for (std::size_t i = 0; i < g->size(); ++i) {
        CHECK(g->volume(i) > 0.0);
        CHECK(g->face(i + 1) > g->face(i));
      }
    }
  }
  CHECK_THROWS(make_grid(3, 0.0, -1.0, 100));
}

TEST_CASE("steady states and conservation") {
  auto g = make_grid(3, 0.0, 2.0, 64);
  auto Pe = regularize(PorousNonlinearity::pure_power(2.0), 1e-3);
  DensityField c(g, std::vector<double>(64, 0.7));
  SolverConfig cfg;
  cfg.outer_buffer = 0.0;
  auto next = step(c, Pe, 0.1, cfg);
  for (double v : next.values) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(next.t == doctest::Approx(0.1));

  auto h = make_grid(2, 1.0, 3.0, 128);
  auto b = bump(h, 2.0, 1.0);
  const double m0 = mass(b);
  auto s1 = step(b, Pe, 0.05);
  CHECK(std::abs(mass(s1) - m0) / m0 < 1e-12);
  CHECK_THROWS(step(b, Pe, 0.0));

  auto traj = evolve(b, Pe, 0.0);
  CHECK(traj.states.size() == 1);
  CHECK(traj.states[0].values == b.values);
}

TEST_CASE("implicit scheme converges to the explicit reference") {
  auto g = make_grid(2, 0.0, 2.0, 40);
  auto Pe = regularize(PorousNonlinearity::pure_power(2.0), 1e-3);
  auto rho0 = bump(g, 1.0, 1.0);
  const double T = 0.02;
  auto ref = explicit_reference(rho0, Pe, T, 1e-6);
  auto error = [&](double dt) {
    DensityField s = rho0;
    const int steps = static_cast<int>(std::lround(T / dt));
    for (int k = 0; k < steps; ++k) s = step(s, Pe, dt);
    double e = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) e = std::max(e, std::abs(s.values[i] - ref[i]));
    return e;
  };
  const double e1 = error(2e-3), e2 = error(1e-3), e3 = error(5e-4);
  CHECK(e2 < e1);
  CHECK(e3 < e2);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.2));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("norms, contraction and energy along a run") {
  auto g = make_grid(3, 1.0, 3.0, 200);
  auto P = PorousNonlinearity::pure_power(2.0);
  auto a = bump(g, 3.0, 0.8);
  auto b = DensityField::from_function(g, [](double r) { return r < 0.5 ? 1.5 + r : 0.0; });
  auto Pe = regularize(P, 1.0 / (2.0 * std::max(sup_norm(a), sup_norm(b))));
  SolverConfig cfg;
  cfg.record_every_step = true;
  auto trajs = evolve_many({a, b}, Pe, 0.2, cfg);
  const auto& ta = trajs[0];
  const auto& tb = trajs[1];
  REQUIRE(ta.states.size() == tb.states.size());
  REQUIRE(ta.states.size() > 10);
  const double ma = mass(a), psi0 = free_energy(a, Pe);
  for (std::size_t k = 1; k < ta.states.size(); ++k) {
    const auto& prev = ta.states[k - 1];
    const auto& now = ta.states[k];
    CHECK(now.t == tb.states[k].t);
    CHECK(std::abs(mass(now) - ma) / ma < 1e-10);
    for (double p : {1.0, 2.0, 4.0, static_cast<double>(INFINITY)}) {
      CHECK(lp_norm(now, p) <= lp_norm(prev, p) * (1.0 + 1e-9));
    }
    CHECK(l1_distance(now, tb.states[k]) <=
          l1_distance(prev, tb.states[k - 1]) + 1e-9 * ma);
    CHECK(ta.dissipation[k] + free_energy(now, Pe) <= psi0 + 1e-8);
  }
}

TEST_CASE("comparison principle") {
  auto g = make_grid(2, 1.0, 3.0, 120);
  auto lo = bump(g, 1.0, 0.6);
  auto hi = DensityField::from_function(g, [&](double r) { return r < 0.9 ? 1.2 : 0.0; });
  for (std::size_t i = 0; i < lo.values.size(); ++i) REQUIRE(lo.values[i] <= hi.values[i]);
  auto Pe = regularize(PorousNonlinearity::pure_power(3.0), 1e-3);
  SolverConfig cfg;
  cfg.checkpoints = {0.01, 0.05, 0.1};
  auto trajs = evolve_many({lo, hi}, Pe, 0.3, cfg);
  for (std::size_t k = 0; k < trajs[0].states.size(); ++k) {
    for (std::size_t i = 0; i < g->size(); ++i) {
      CHECK(trajs[0].states[k].values[i] <= trajs[1].states[k].values[i] + 1e-12);
    }
  }
}

TEST_CASE("domain too small") {
  auto g = make_grid(2, 0.0, 1.0, 50);
  auto rho = DensityField::from_function(g, [](double r) { return r < 0.9 ? 1.0 : 0.0; });
  auto Pe = regularize(PorousNonlinearity::pure_power(2.0), 0.5);
  CHECK_THROWS_AS(evolve(rho, Pe, 1.0), DomainTooSmall);
}

TEST_CASE("smoothing exponent on a coarse grid") {
  auto g = make_grid(3, 0.0, 1.5, 1024);
  auto rho0 = near_dirac_datum(g, 1.0, 0.02);
  auto Pe = regularize(PorousNonlinearity::pure_power(2.0), 1e-6 / (2.0 * sup_norm(rho0)));
  SolverConfig cfg;
  for (int i = 0; i <= 8; ++i) cfg.checkpoints.push_back(1e-3 * std::pow(100.0, i / 8.0));
  cfg.dt_max = 1e-3;
  auto traj = evolve(rho0, Pe, 0.1, cfg);
  std::vector<double> lt, ls;
  for (const auto& s : traj.states) {
    if (s.t < 1e-3 * (1 - 1e-12)) continue;
    lt.push_back(std::log(s.t));
    ls.push_back(std::log(sup_norm(s)));
  }
  CHECK(fit_slope(lt, ls) == doctest::Approx(-0.6).epsilon(0.05 / 0.6));
}

TEST_CASE("Barenblatt profile") {
  for (auto [n, m] : std::vector<std::pair<int, double>>{{3, 2.0}, {2, 2.0}, {3, 3.0}, {2, 1.5}}) {
    Barenblatt B(n, m, 1.7);
    for (double t : {0.1, 1.0}) {
      const double A = B.front(t);
      CHECK(B.value(A * 1.0001, t) == 0.0);
      boost::math::quadrature::tanh_sinh<double> ts;
      const double integral = ts.integrate(
          [&](double r) { return B.value(r, t) * unit_sphere_area(n) * std::pow(r, n - 1); }, 0.0,
          A, 1e-13);
      CHECK(integral == doctest::Approx(1.7).epsilon(1e-8));
    }
    for (double r : {0.0, 0.3, 0.9}) {
      const double t = 0.37;
      CHECK(B.value(r, t) ==
            doctest::Approx(std::pow(t, -B.alpha) * B.value(r * std::pow(t, -B.alpha / n), 1.0))
                .epsilon(1e-12));
    }
  }
  CHECK_THROWS(barenblatt_euclidean(3, 2.0, 1.0, 0.1, 0.0));
}

TEST_CASE("near-Dirac datum") {
  auto g = make_grid(3, 0.0, 1.0, 400);
  auto d = near_dirac_datum(g, 2.0, 0.1);
  CHECK(mass(d) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sup_norm(d) == doctest::Approx(2.0 / g->manifold().ball_volume(0.1)).epsilon(1e-12));
  auto half = near_dirac_datum(g, 2.0, 0.05);
  CHECK(sup_norm(half) / sup_norm(d) ==
        doctest::Approx(g->manifold().ball_volume(0.1) / g->manifold().ball_volume(0.05)));
  CHECK_THROWS(near_dirac_datum(g, 1.0, 0.003));
}

TEST_CASE("traveling-wave supersolution") {
  auto P = PorousNonlinearity::pure_power(2.0);
  auto tw = choose_supersolution_constants(1.0, 0.2, 2.0, P);
  CHECK(tw.C1 == doctest::Approx(10.0));
  CHECK(tw.C2 == doctest::Approx(10.0 * 2.0 * (1.0 + 3.0 * 2.0 * 0.2 / 4.0)));
  CHECK(tw.t1 == doctest::Approx(0.2 / (4.0 * tw.C2)));
  CHECK(choose_supersolution_constants(2.0, 0.2, 2.0, P).C1 == doctest::Approx(2.0 * tw.C1));
  CHECK(choose_supersolution_constants(1.0, 0.2, 0.0, P).C2 == doctest::Approx(tw.C1 * 2.0));

  const double t = 0.5 * tw.t1;
  CHECK(traveling_wave_value(tw, 0.5 * tw.eps_collar - tw.C2 * t - 1e-6, t) == 0.0);
  CHECK(traveling_wave_value(tw, 0.2, 0.0) == doctest::Approx(std::pow(10.0 * 0.1, 1.0)));
  auto tw3 = choose_supersolution_constants(1.0, 0.2, 2.0, PorousNonlinearity::pure_power(3.0));
  CHECK(traveling_wave_value(tw3, 0.2, 0.0) == doctest::Approx(std::pow(tw3.C1 * 0.1, 0.5)));
  CHECK_THROWS_AS(traveling_wave_value(tw, 0.1, 2.0 * tw.t1), DomainError);

  for (double d = 0.0; d < 0.2; d += 0.01) {
    for (double s = 0.0; s < tw.t1; s += tw.t1 / 10) {
      CHECK(traveling_wave_value(tw, d + 0.01, s) >= traveling_wave_value(tw, d, s));
      CHECK(traveling_wave_value(tw, d, std::min(s + tw.t1 / 10, tw.t1)) >=
            traveling_wave_value(tw, d, s));
    }
  }
}

TEST_CASE("checkpoint csv") {
  CHECK(checkpoint_filename(0.1) == "rho_t0.100000000.csv");
  auto g = make_grid(2, 0.0, 1.0, 8);
  DensityField d(g, std::vector<double>(8, 0.25), 0.5);
  auto dir = std::filesystem::temp_directory_path() / "pmelab_ckpt_test";
  std::filesystem::remove_all(dir);
  auto path = write_checkpoint_csv(d, dir);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "r,rho");
  std::filesystem::remove_all(dir);
}
