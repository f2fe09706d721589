#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ot_oracle.hpp"
#include "pmelab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <numbers>
#include <random>
#include <vector>

using namespace pmelab;
using pmelab::testing::vertex_enumeration;

namespace {

double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<double> random_weights(std::mt19937_64& rng, std::size_t k, double mass) {
  std::vector<double> w(k);
  double s = 0;
  for (auto& x : w) s += (x = 0.1 + uniform(rng));
  for (auto& x : w) x *= mass / s;
  return w;
}

std::vector<std::vector<double>> random_points(std::mt19937_64& rng, std::size_t k, int dim) {
  std::vector<std::vector<double>> p(k, std::vector<double>(dim));
  for (auto& v : p)
    for (auto& c : v) c = 2.0 * uniform(rng) - 1.0;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("exact_ot matches vertex enumeration on small instances") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng() % 4, n = 1 + rng() % 4;
    auto pa = random_points(rng, m, 2), pb = random_points(rng, n, 2);
    auto a = random_weights(rng, m, 1.0);
    auto b = random_weights(rng, n, 1.0);
    // make some instances degenerate
    if (trial % 5 == 0 && m == n) b = a;
    const CostMatrix c = squared_distance_matrix(pa, pb);
    const TransportPlan plan = exact_ot(DiscreteMeasure(pa, a), DiscreteMeasure(pb, b), c);
    const double oracle = vertex_enumeration(a, b, c);
    CHECK(std::abs(plan.cost - oracle) < 1e-12);
    const auto rs = plan.row_sums(), cs = plan.col_sums();
    for (std::size_t i = 0; i < m; ++i) CHECK(std::abs(rs[i] - a[i]) < 1e-13);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(cs[j] - b[j]) < 1e-12);
  }
}

TEST_CASE("exact_ot: Diracs, identical measures, mismatched masses") {
  std::vector<std::vector<double>> x{{0.0, 0.0}}, y{{3.0, 4.0}};
  const CostMatrix c = squared_distance_matrix(x, y);
  CHECK(exact_ot(DiscreteMeasure(x, {2.5}), DiscreteMeasure(y, {2.5}), c).cost == doctest::Approx(2.5 * 25.0));

  std::mt19937_64 rng(3);
  auto p = random_points(rng, 12, 3);
  auto w = random_weights(rng, 12, 1.0);
  const TransportPlan self = exact_ot(DiscreteMeasure(p, w), DiscreteMeasure(p, w), squared_distance_matrix(p, p));
  CHECK(std::abs(self.cost) < 1e-15);

  CHECK_THROWS_AS(exact_ot(DiscreteMeasure(x, {1.0}), DiscreteMeasure(y, {1.5}), c), MassMismatch);
  CHECK_THROWS_AS(exact_ot(DiscreteMeasure(x, {-1.0}), DiscreteMeasure(y, {-1.0}), c), std::invalid_argument);
}

TEST_CASE("exact_ot duals are feasible and tight") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 3 + rng() % 10, n = 3 + rng() % 10;
    auto pa = random_points(rng, m, 2), pb = random_points(rng, n, 2);
    auto a = random_weights(rng, m, 1.0), b = random_weights(rng, n, 1.0);
    const CostMatrix c = squared_distance_matrix(pa, pb);
    const TransportPlan plan = exact_ot(DiscreteMeasure(pa, a), DiscreteMeasure(pb, b), c);
    double dual = 0.0;
    for (std::size_t i = 0; i < m; ++i) dual += a[i] * plan.u[i];
    for (std::size_t j = 0; j < n; ++j) dual += b[j] * plan.v[j];
    CHECK(std::abs(dual - plan.cost) < 1e-12);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(c(i, j) - plan.u[i] - plan.v[j] > -1e-11);
  }
}

TEST_CASE("exact_ot triangle inequality and mass scaling") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto p1 = random_points(rng, 6, 2), p2 = random_points(rng, 7, 2), p3 = random_points(rng, 5, 2);
    DiscreteMeasure m1(p1, random_weights(rng, 6, 1.0)), m2(p2, random_weights(rng, 7, 1.0)),
        m3(p3, random_weights(rng, 5, 1.0));
    const double w12 = std::sqrt(exact_ot(m1, m2, squared_distance_matrix(p1, p2)).cost);
    const double w23 = std::sqrt(exact_ot(m2, m3, squared_distance_matrix(p2, p3)).cost);
    const double w13 = std::sqrt(exact_ot(m1, m3, squared_distance_matrix(p1, p3)).cost);
    CHECK(w13 <= w12 + w23 + 1e-12);

    DiscreteMeasure s1 = m1, s3 = m3;
    for (auto& w : s1.weights) w *= 3.0;
    for (auto& w : s3.weights) w *= 3.0;
    const double scaled = exact_ot(s1, s3, squared_distance_matrix(p1, p3)).cost;
    CHECK(scaled == doctest::Approx(3.0 * w13 * w13).epsilon(1e-12));
  }
}

TEST_CASE("sinkhorn approaches the exact cost and rounding restores marginals") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    auto pa = random_points(rng, 16, 2), pb = random_points(rng, 16, 2);
    DiscreteMeasure a(pa, random_weights(rng, 16, 1.0)), b(pb, random_weights(rng, 16, 1.0));
    const CostMatrix c = squared_distance_matrix(pa, pb);
    const double exact = exact_ot(a, b, c).cost;
    const double reg = 1e-3 * median(c.data());
    const TransportPlan plan = sinkhorn(a, b, c, reg);
    CHECK(plan.cost >= exact - 1e-12);
    CHECK(plan.cost - exact < 1e-3 * exact);
    const auto rs = plan.row_sums(), cs = plan.col_sums();
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(rs[i] - a.weights[i]) < 1e-14);
    for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(cs[j] - b.weights[j]) < 1e-14);
  }
  // mu = nu: cost decreases to 0 as the regularization vanishes
  {
    std::vector<std::vector<double>> p;
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v) p.push_back({0.5 * u, 0.5 * v});
    DiscreteMeasure a(p, random_weights(rng, 9, 1.0));
    const CostMatrix c = squared_distance_matrix(p, p);
    double prev = INFINITY;
    for (double reg : {1e-1, 1e-2, 1e-3, 1e-4}) {
      const double cost = sinkhorn(a, a, c, reg).cost;
      CHECK(cost < prev);
      prev = cost;
    }
    CHECK(prev < 1e-8);
    // plain iterations reach the same plan
    SinkhornOptions plain;
    plain.overrelaxation = 1.0;
    CHECK(sinkhorn(a, a, c, 1e-2, plain).cost == doctest::Approx(sinkhorn(a, a, c, 1e-2).cost).epsilon(1e-6));
  }
  DiscreteMeasure a({1.0}), b({1.0});
  CHECK_THROWS_AS(sinkhorn(a, b, CostMatrix(1, 1), 0.0), std::invalid_argument);
  SinkhornOptions bad;
  bad.max_iterations = 3;
  auto p = random_points(rng, 16, 2), q = random_points(rng, 16, 2);
  CHECK_THROWS_AS(sinkhorn(DiscreteMeasure(p, random_weights(rng, 16, 1.0)), DiscreteMeasure(q, random_weights(rng, 16, 1.0)),
                           squared_distance_matrix(p, q), 1e-4, bad),
                  std::runtime_error);
}

TEST_CASE("radial quantile W2") {
  // uniform on [0,1] vs [0,2] along one line: W2 = 1/sqrt(3)
  const std::size_t N = 4000;
  std::vector<double> ra(N), rb(N), w(N, 1.0 / N);
  for (std::size_t i = 0; i < N; ++i) {
    ra[i] = (i + 0.5) / N;
    rb[i] = 2.0 * (i + 0.5) / N;
  }
  CHECK(w2_radial_quantile(ra, w, rb, w) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-6));

  // matches the exact solver for measures on a line with 32 atoms each
  std::mt19937_64 rng(17);
  std::vector<double> xa(32), xb(32);
  for (auto& x : xa) x = uniform(rng);
  for (auto& x : xb) x = 2.0 * uniform(rng);
  auto ma = random_weights(rng, 32, 1.0), mb = random_weights(rng, 32, 1.0);
  std::vector<std::vector<double>> pa, pb;
  for (double x : xa) pa.push_back({x});
  for (double x : xb) pb.push_back({x});
  const double exact = std::sqrt(exact_ot(DiscreteMeasure(pa, ma), DiscreteMeasure(pb, mb),
                                          squared_distance_matrix(pa, pb)).cost);
  CHECK(std::abs(w2_radial_quantile(xa, ma, xb, mb) - exact) < 1e-6);

  auto grid = make_grid(3, 1.0, 1.0, 64);
  auto f = DensityField::from_function(grid, [](double r) { return r < 0.5 ? 1.0 : 0.0; });
  CHECK(w2_same_center_radial(f, f) == 0.0);
  CHECK_THROWS_AS(w2_radial_quantile({0.0}, {1.0}, {1.0}, {2.0}), MassMismatch);
}

TEST_CASE("Hopf-Lax semigroup") {
  // phi(y) = |y| on a fine line: Q_s phi(x) = |x| - s/2 for |x| >= s, x^2/(2s) otherwise
  std::vector<std::vector<double>> ys, xs;
  std::vector<double> phi;
  for (int k = -4000; k <= 4000; ++k) {
    ys.push_back({k * 1e-3});
    phi.push_back(std::abs(k * 1e-3));
  }
  for (double x : {-2.0, -0.7, -0.1, 0.0, 0.05, 0.3, 1.5}) xs.push_back({x});
  CostMatrix d(xs.size(), ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) d(i, j) = std::abs(xs[i][0] - ys[j][0]);
  const double s = 0.5;
  const DualPotential q = hopf_lax({phi, 0.0}, s, d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = std::abs(xs[i][0]);
    const double expect = x >= s ? x - s / 2 : x * x / (2 * s);
    CHECK(std::abs(q.values[i] - expect) < 2e-6);
  }

  // constants are fixed; s -> 0 recovers phi on the points themselves
  CostMatrix dd(ys.size(), ys.size());
  std::vector<double> cst(ys.size(), 0.25);
  for (std::size_t i = 0; i < ys.size(); i += 400)
    for (std::size_t j = 0; j < ys.size(); ++j) dd(i, j) = std::abs(ys[i][0] - ys[j][0]);
  const DualPotential qc = hopf_lax({cst, 0.0}, 3.0, dd);
  for (std::size_t i = 0; i < ys.size(); i += 400) CHECK(qc.values[i] == 0.25);
  std::vector<double> wave(ys.size());
  for (std::size_t j = 0; j < ys.size(); ++j) wave[j] = std::sin(3.0 * ys[j][0]);
  const DualPotential q0 = hopf_lax({wave, 0.0}, 1e-9, dd);
  for (std::size_t i = 0; i < ys.size(); i += 400) CHECK(q0.values[i] == doctest::Approx(wave[i]));
  CHECK_THROWS_AS(hopf_lax({wave, 0.0}, 0.0, dd), std::invalid_argument);
}

TEST_CASE("Kantorovich lower bound is at most half the cost, equal for LP duals") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    auto pa = random_points(rng, 9, 2), pb = random_points(rng, 11, 2);
    DiscreteMeasure a(pa, random_weights(rng, 9, 1.0)), b(pb, random_weights(rng, 11, 1.0));
    const CostMatrix c = squared_distance_matrix(pa, pb);
    CostMatrix d(9, 11);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 11; ++j) d(i, j) = std::sqrt(c(i, j));
    const TransportPlan plan = exact_ot(a, b, c);
    std::vector<double> phi(9);
    for (std::size_t i = 0; i < 9; ++i) phi[i] = -plan.u[i] / 2.0;
    CHECK(kantorovich_lower_bound(a, b, phi, d) == doctest::Approx(plan.cost / 2).epsilon(1e-10));
    for (int k = 0; k < 10; ++k) {
      std::vector<double> rnd(9);
      for (auto& x : rnd) x = uniform(rng) - 0.5;
      CHECK(kantorovich_lower_bound(a, b, rnd, d) <= plan.cost / 2 + 1e-14);
    }
  }
}

TEST_CASE("bisector W1 bound: closed-form g agrees with the hyperboloid model") {
  // Average of the signed distance over a geodesic sphere of radius r about y,
  // evaluated pointwise with exp_map and compared with the radial formula.
  const int n = 3;
  const double K = 1.3, delta = 0.4, r = 0.7;
  const auto x = HyperboloidPoint::origin(n, K);
  std::vector<double> e1(n + 1, 0.0), me1(n + 1, 0.0);
  e1[0] = 1.0;
  me1[0] = -1.0;
  const auto y = exp_map(x, e1, delta);
  const auto ymirror = exp_map(x, me1, delta);
  const TangentVector v_at_y = parallel_transport(x, e1, delta, e1);
  const double sk = std::sqrt(K);
  for (double alpha : {0.0, 0.3, 1.2, 2.0, std::numbers::pi}) {
    std::vector<double> w(n + 1, 0.0);
    w[0] = std::cos(alpha);
    w[1] = std::sin(alpha);
    const TangentVector wy = parallel_transport(x, e1, delta, w);
    const auto z = exp_map(y, unit_tangent(y, wy), r);
    const double model = signed_distance_to_bisector(z, ymirror, y);
    const double closed =
        std::asinh(std::sinh(sk * delta) * std::cosh(sk * r) +
                   std::cosh(sk * delta) * std::sinh(sk * r) * std::cos(alpha)) / sk;
    CHECK(model == doctest::Approx(closed).epsilon(1e-10));
    (void)v_at_y;
  }
}

TEST_CASE("bisector W1 bound: limits and scaling") {
  const double delta = 0.05;
  // Euclidean: the mean of delta + r cos(alpha) is delta for any radial profile
  {
    auto grid = make_grid(3, 0.0, 1.0, 256);
    auto rho = near_dirac_datum(grid, 1.0, 0.3);
    CHECK(w1_bisector_lower_bound(rho, delta) == doctest::Approx(delta).epsilon(1e-12));
  }
  // curved: bound exceeds delta by O(width^2) and tends to delta
  double prev_excess = 0.0;
  for (double width : {0.2, 0.1, 0.05}) {
    auto grid = make_grid(2, 1.0, 1.0, 400);
    auto rho = near_dirac_datum(grid, 1.0, width);
    const double b = w1_bisector_lower_bound(rho, delta);
    const double excess = b - delta;
    CHECK(excess > 0.0);
    if (prev_excess > 0.0) CHECK(prev_excess / excess == doctest::Approx(4.0).epsilon(0.05));
    prev_excess = excess;
  }
  // mass normalization
  auto grid = make_grid(3, 1.0, 1.0, 128);
  auto rho = near_dirac_datum(grid, 1.0, 0.2);
  auto rho5 = rho;
  for (auto& v : rho5.values) v *= 5.0;
  CHECK(w1_bisector_lower_bound(rho5, delta) == doctest::Approx(w1_bisector_lower_bound(rho, delta)).epsilon(1e-13));
  // the point overload uses the geodesic distance
  const auto x = HyperboloidPoint::origin(3, 1.0);
  std::vector<double> e1{1, 0, 0, 0};
  const auto y = exp_map(x, e1, delta);
  CHECK(w1_bisector_lower_bound(rho, x, y) == doctest::Approx(w1_bisector_lower_bound(rho, delta)).epsilon(1e-12));
  CHECK_THROWS_AS(w1_bisector_lower_bound(rho, -1.0), std::invalid_argument);
}

TEST_CASE("CSV writers") {
  const auto dir = std::filesystem::temp_directory_path() / "pmelab_transport_test";
  std::filesystem::create_directories(dir);
  std::vector<std::vector<double>> p{{0.0, 1.0}, {2.0, 3.0}};
  DiscreteMeasure m(p, {0.25, 0.75});
  write_measure_csv(m, dir / "m.csv");
  const TransportPlan plan = exact_ot(m, m, squared_distance_matrix(p, p));
  write_plan_csv(plan, dir / "p.csv");
  std::ifstream is(dir / "p.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "i,j,weight");
  std::ifstream ms(dir / "m.csv");
  std::getline(ms, header);
  CHECK(header == "x0,x1,weight");
  std::filesystem::remove_all(dir);
}
