#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pmelab/lab.hpp"
#include "pmelab/worker_pool.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace pmelab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pmelab_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("experiment names round-trip") {
  for (const auto& name : experiment_names()) CHECK(experiment_name(parse_experiment(name)) == name);
  CHECK_THROWS_AS(parse_experiment("nope"), ConfigError);
}

TEST_CASE("config: defaults differ per experiment and validate") {
  for (const auto& name : experiment_names()) {
    const auto cfg = ExperimentConfig::defaults(parse_experiment(name));
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.to_json().at("experiment") == name);
  }
  const auto sm = ExperimentConfig::defaults(Experiment::Smoothing);
  CHECK(sm.manifold.n == 3);
  CHECK(sm.grid.N == 4096);
  CHECK(sm.time.t_start == 1e-3);
  CHECK(sm.time.T == 0.1);
  const auto st = ExperimentConfig::defaults(Experiment::Stability);
  CHECK(st.stability.delta == 0.05);
  CHECK(st.stability.slack == 0.05);
  CHECK(st.manifold.K == 1.0);
}

TEST_CASE("config: TOML overlay") {
  const auto cfg = parse_config(R"(
experiment = "stability"
seed = "18446744073709551615"
cartan_hadamard = true
[manifold]
n = 3
K = 2
[nonlinearity]
m = 3
[grid]
N = 500
R_max = 2
[stability]
dimensions = [3]
delta = 0.01
)",
                                Experiment::Stability);
  CHECK(cfg.seed == 18446744073709551615ull);
  CHECK(cfg.cartan_hadamard);
  CHECK(cfg.manifold.n == 3);
  CHECK(cfg.manifold.K == 2.0);  // integer literal accepted for a float field
  CHECK(cfg.nonlinearity.m == 3.0);
  CHECK(cfg.grid.N == 500);
  CHECK(cfg.stability.dimensions == std::vector<int>{3});
  CHECK(cfg.stability.delta == 0.01);
  CHECK(cfg.datum.M == 1.0);  // untouched default

  const auto poly = parse_config(R"(
[nonlinearity]
flavor = "polynomial"
m = 2
terms = [[1.0, 2.0], [0.5, 3.0]]
c0 = 1
c1 = 2.5
)",
                                 Experiment::Smoothing);
  REQUIRE(poly.nonlinearity.terms.size() == 2);
  CHECK(poly.nonlinearity.terms[1] == std::pair<double, double>{0.5, 3.0});
  CHECK_NOTHROW(make_nonlinearity(poly.nonlinearity));
}

TEST_CASE("config: errors") {
  CHECK_THROWS_WITH_AS(parse_config("bogus = 1", Experiment::Smoothing), doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[grid]\ncells = 3", Experiment::Smoothing), doctest::Contains("grid.cells"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config("[nowhere]\nx = 1", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nN = \"many\"", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = \"12x\"", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = -1", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nN = -5", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"be_check\"", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[grid\nN = 1", Experiment::Smoothing), doctest::Contains("line"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nonlinearity]\nm = 1.0", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("[manifold]\nK = -1", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("[manifold]\nn = 1", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("[nonlinearity]\neps_ratio = 0", Experiment::Smoothing), ConfigError);
  CHECK_THROWS_AS(parse_config("[ot]\nengine = \"magic\"", Experiment::Stability), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/pmelab.toml", Experiment::Smoothing), ConfigError);
}

TEST_CASE("stability factor") {
  // K = 0 and t = 0 give 1
  CHECK(stability_factor(0.0, 1.0, 2.0, 2, 1.0, 0.5, 1.0) == 1.0);
  CHECK(stability_factor(1.0, 1.0, 2.0, 2, 1.0, 0.0, 1.0) == 1.0);
  // n = 2, m = 2, C = 1: C_m = 1 * 1 * 4, exponent 2/4
  const double t = 0.01;
  CHECK(stability_factor(1.0, 1.0, 2.0, 2, 1.0, t, 1.0) == doctest::Approx(std::exp(4.0 * std::sqrt(t))));
  // past s = 1 the linear term takes over
  CHECK(stability_factor(0.1, 1.0, 2.0, 2, 1.0, 4.0, 1.0) == doctest::Approx(std::exp(0.1 * 4.0 * 4.0)));
  CHECK(stability_factor(0.1, 1.0, 2.0, 2, 1.0, 4.0, 1.0, true) == doctest::Approx(std::exp(0.1 * 4.0 * 2.0)));

  // nondecreasing in t, K, M, c1 over a lattice
  const double ts[] = {0.0, 1e-3, 0.1, 1.0, 5.0};
  const double Ks[] = {0.0, 0.5, 1.0, 3.0};
  const double Ms[] = {0.1, 1.0, 4.0};
  const double cs[] = {0.5, 1.0, 2.0};
  for (int n : {2, 3}) {
    for (double m : {1.5, 2.0, 3.0}) {
      for (bool ch : {false, true}) {
        for (std::size_t a = 0; a < 5; ++a)
          for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t c = 0; c < 3; ++c)
              for (std::size_t d = 0; d < 3; ++d) {
                const double f = stability_factor(Ks[b], cs[d], m, n, Ms[c], ts[a], 1.5, ch);
                if (a + 1 < 5) CHECK(stability_factor(Ks[b], cs[d], m, n, Ms[c], ts[a + 1], 1.5, ch) >= f);
                if (b + 1 < 4) CHECK(stability_factor(Ks[b + 1], cs[d], m, n, Ms[c], ts[a], 1.5, ch) >= f);
                if (c + 1 < 3) CHECK(stability_factor(Ks[b], cs[d], m, n, Ms[c + 1], ts[a], 1.5, ch) >= f);
                if (d + 1 < 3) CHECK(stability_factor(Ks[b], cs[d + 1], m, n, Ms[c], ts[a], 1.5, ch) >= f);
                if (ch) CHECK(f <= stability_factor(Ks[b], cs[d], m, n, Ms[c], ts[a], 1.5, false));
              }
      }
    }
  }
  CHECK_THROWS_AS(stability_factor(-1.0, 1.0, 2.0, 2, 1.0, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("meridian cloud keeps mass and radii") {
  for (double K : {0.0, 1.0}) {
    auto g = make_grid(3, K, 1.0, 100);
    const auto rho = DensityField::from_function(g, [](double r) { return r < 0.3 ? 1.0 + r : 0.0; });
    const double offset = 0.2;
    const auto cloud = meridian_cloud(rho, offset, 0.3, 10, 8);
    CHECK(cloud.size() == 80);
    CHECK(cloud.mass() == doctest::Approx(mass(rho)).epsilon(1e-13));
    // every point sits within the outer bin radius of the center
    for (const auto& p : cloud.points) {
      double d;
      if (K > 0.0) {
        const auto center = exp_map(HyperboloidPoint::origin(2, K), std::vector<double>{1.0, 0.0, 0.0}, offset);
        d = geodesic_distance(HyperboloidPoint(p, K), center);
      } else {
        d = std::hypot(p[0] - offset, p[1]);
      }
      CHECK(d <= 0.3 + 1e-12);
    }
  }
}

TEST_CASE("W2 interval") {
  OtParams ot;
  ot.radial_bins = 12;
  ot.angular_nodes = 8;
  // Euclidean translate: the clouds are exact translates, W2 = delta
  auto flat = make_grid(2, 0.0, 1.0, 200);
  const auto rho = DensityField::from_function(flat, [](double r) { return r < 0.2 ? 1.0 : 0.0; });
  const auto w = w2_interval(rho, rho, 0.05, ot);
  CHECK(w.upper == doctest::Approx(0.05 * std::sqrt(mass(rho))).epsilon(1e-9));
  CHECK(w.lower <= w.upper * (1.0 + 1e-6));
  CHECK(w.lower == doctest::Approx(w.upper).epsilon(1e-4));

  // identical co-centered data
  auto hyp = make_grid(2, 1.0, 1.0, 200);
  const auto h = DensityField::from_function(hyp, [](double r) { return r < 0.2 ? 1.0 : 0.0; });
  CHECK(w2_interval(h, h, 0.0, ot).upper == 0.0);

  // hyperbolic translate is bracketed
  const auto wh = w2_interval(h, h, 0.05, ot);
  CHECK(wh.lower > 0.05 * std::sqrt(mass(h)));
  CHECK(wh.lower <= wh.upper * (1.0 + 1e-6));

  ot.engine = "sinkhorn";
  const auto ws = w2_interval(h, h, 0.05, ot);
  CHECK(ws.upper >= wh.upper * (1.0 - 1e-9));
  CHECK(ws.upper <= wh.upper * 1.01);

  auto twice = h;
  for (auto& v : twice.values) v *= 2.0;
  CHECK_THROWS_AS(w2_interval(h, twice, 0.05, ot), MassMismatch);
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  std::atomic<int> ran{0};
  parallel_for(50, 4, [&](std::size_t) { ++ran; });
  CHECK(ran == 50);
  for (int threads : {1, 3}) {
    try {
      parallel_for(20, threads, [](std::size_t i) {
        if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "7");
    }
  }
}

TEST_CASE("runner preconditions fail before any solve") {
  auto st = ExperimentConfig::defaults(Experiment::Stability);
  st.datum.M_hat = 2.0;
  CHECK_THROWS_AS(run_stability_check(st), MassMismatch);

  auto cs = ExperimentConfig::defaults(Experiment::CompactSupport);
  cs.compact_support.datum_radius = cs.compact_support.R_D - 0.5 * cs.compact_support.collar;
  CHECK_THROWS_WITH_AS(run_compact_support_check(cs), doctest::Contains("collar"), ConfigError);

  auto op = ExperimentConfig::defaults(Experiment::Optimality);
  op.manifold.K = 0.0;
  op.optimality.curvatures = {};
  CHECK_THROWS_AS(run_optimality_scan(op), ConfigError);
}

TEST_CASE("optimality verdicts are withheld above the delta threshold") {
  auto cfg = ExperimentConfig::defaults(Experiment::Optimality);
  cfg.grid.N = 400;
  cfg.datum.width = 0.02;
  cfg.time.checkpoints = 3;
  cfg.optimality.curvatures = {};
  cfg.optimality.delta = 0.05;
  const auto rep = run_optimality_scan(cfg);
  REQUIRE(!rep.verdicts.empty());
  for (const auto& v : rep.verdicts) CHECK(v.status == VerdictStatus::Withheld);
  CHECK(!rep.all_pass());
}

TEST_CASE("report schema and byte determinism") {
  Report empty;
  empty.config = ExperimentConfig::defaults(Experiment::BeCheck);
  const auto dir0 = scratch("empty");
  emit_report(empty, dir0);
  const auto j = nlohmann::json::parse(slurp(dir0 / "report.json"));
  CHECK(j.size() == 4);
  for (const char* key : {"config", "records", "fits", "verdicts"}) CHECK(j.contains(key));
  CHECK(j.at("records").empty());
  const auto manifest = nlohmann::json::parse(slurp(dir0 / "manifest.json"));
  CHECK(manifest.at("seed") == 0);
  CHECK(manifest.at("config") == j.at("config"));
  CHECK(empty.all_pass());
  fs::remove_all(dir0);

  auto cfg = ExperimentConfig::defaults(Experiment::Stability);
  cfg.grid.N = 300;
  cfg.datum.width = cfg.datum.width_hat = 0.05;
  cfg.stability.dimensions = {2};
  cfg.stability.control = false;
  cfg.time.checkpoints = 3;
  cfg.ot.radial_bins = 8;
  cfg.ot.angular_nodes = 6;
  const auto rep = run_stability_check(cfg);
  const auto a = scratch("a"), b = scratch("b");
  const auto files = emit_report(rep, a);
  CHECK(emit_report(run_stability_check(cfg), b) == files);
  for (const auto& f : files) CHECK(slurp(a / f) == slurp(b / f));

  const std::string csv = slurp(a / "stability_n2.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "t,w2_lower,w2_upper,bound,verdict");
  CHECK(fs::exists(a / "n2_rho" / "rho_t0.000000000.csv"));
  CHECK(slurp(a / "n2_rho" / "rho_t0.000000000.csv").rfind("r,rho\n", 0) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("fit CSVs carry x,y,fit") {
  Report rep;
  rep.config = ExperimentConfig::defaults(Experiment::Smoothing);
  rep.fits.push_back(fit_line("line", {0.0, 1.0, 2.0}, {1.0, 3.0, 5.0}));
  CHECK(rep.fits[0].slope == doctest::Approx(2.0));
  const auto dir = scratch("fit");
  emit_report(rep, dir);
  CHECK(slurp(dir / "fit_line.csv") == "x,y,fit\n0,1,1\n1,3,3\n2,5,5\n");
  fs::remove_all(dir);
}

TEST_CASE("conservation suite on a few random configurations") {
  const auto cases = run_conservation_suite(3, 4, 1);
  REQUIRE(cases.size() == 4);
  for (const auto& c : cases) {
    CHECK(c.pass);
    CHECK(c.max_mass_drift < 1e-10);
  }
  const auto again = run_conservation_suite(3, 4, 2);
  for (std::size_t i = 0; i < cases.size(); ++i) CHECK(again[i].worst_energy_excess == cases[i].worst_energy_excess);
}

TEST_CASE("results do not depend on the worker count") {
  auto cfg = ExperimentConfig::defaults(Experiment::BeCheck);
  cfg.be_check.cells = {100, 200};
  cfg.threads = 1;
  auto one = run_be_check(cfg).to_json();
  cfg.threads = 3;
  auto three = run_be_check(cfg).to_json();
  CHECK(one.at("records") == three.at("records"));
  CHECK(one.at("fits") == three.at("fits"));
  CHECK(one.at("verdicts") == three.at("verdicts"));
}

TEST_CASE("shipped configs spell out the defaults") {
  for (const auto& name : experiment_names()) {
    const auto e = parse_experiment(name);
    auto cfg = load_config(fs::path(PMELAB_SOURCE_DIR) / "configs" / (name + ".toml"), e);
    CHECK(cfg.out == "out/" + name);
    cfg.out = ExperimentConfig::defaults(e).out;
    CHECK(cfg.to_json() == ExperimentConfig::defaults(e).to_json());
  }
}
