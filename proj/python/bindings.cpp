#include "pmelab/hamiltonian.hpp"
#include "pmelab/lab.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pmelab;

namespace {

// Reports cross the boundary as JSON text; the Python side parses it.
std::string report_json(const Report& r) { return r.to_json().dump(); }

ExperimentConfig config_from(const std::string& experiment, const std::string& toml_text) {
  return parse_config(toml_text, parse_experiment(experiment));
}

}  // namespace

PYBIND11_MODULE(_pmelab, m) {
  m.doc() = "Porous medium flow on model manifolds";
  m.attr("__version__") = PMELAB_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MassMismatch>(m, "MassMismatch", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NewtonFailure>(m, "NewtonFailure", PyExc_RuntimeError);
  py::register_exception<DomainTooSmall>(m, "DomainTooSmall", PyExc_RuntimeError);

  m.def("experiment_names", &experiment_names);
  m.def("default_config", [](const std::string& e) { return ExperimentConfig::defaults(parse_experiment(e)).to_json().dump(); },
        py::arg("experiment"));
  m.def("check_config", [](const std::string& e, const std::string& text) { return config_from(e, text).to_json().dump(); },
        py::arg("experiment"), py::arg("toml") = "");

  m.def(
      "run_experiment",
      [](const std::string& e, const std::string& text, std::optional<std::string> out) {
        const auto cfg = config_from(e, text);
        Report rep;
        {
          py::gil_scoped_release release;
          rep = run_experiment(cfg);
          if (out) emit_report(rep, *out);
        }
        return py::make_tuple(report_json(rep), rep.all_pass());
      },
      py::arg("experiment"), py::arg("toml") = "", py::arg("out") = py::none());

  m.def("stability_factor", &stability_factor, py::arg("K"), py::arg("c1"), py::arg("m"), py::arg("n"), py::arg("M"),
        py::arg("t"), py::arg("C_fit"), py::arg("cartan_hadamard") = false);
  m.def("frak_c_m", &frak_c_m, py::arg("C"), py::arg("m"), py::arg("n"));
  m.def("barenblatt", &barenblatt_euclidean, py::arg("n"), py::arg("m"), py::arg("M"), py::arg("r"), py::arg("t"));

  m.def(
      "evolve_near_dirac",
      [](int n, double K, double m, double M, double width, double R_max, std::size_t N, double T,
         std::vector<double> checkpoints, double eps_ratio) {
        auto g = make_grid(n, K, R_max, N);
        const auto rho0 = near_dirac_datum(g, M, width);
        const auto Pe = regularize(PorousNonlinearity::pure_power(m), eps_ratio / (2.0 * sup_norm(rho0)));
        SolverConfig sc;
        sc.checkpoints = std::move(checkpoints);
        Trajectory tr;
        {
          py::gil_scoped_release release;
          tr = evolve(rho0, Pe, T, sc);
        }
        py::list states;
        for (const auto& s : tr.states) states.append(py::make_tuple(s.t, s.values));
        return py::make_tuple(g->centers(), states);
      },
      py::arg("n"), py::arg("K"), py::arg("m"), py::arg("M"), py::arg("width"), py::arg("R_max"), py::arg("N"),
      py::arg("T"), py::arg("checkpoints") = std::vector<double>{}, py::arg("eps_ratio") = 1.0,
      "Returns (cell centers, [(t, density values)]).");

  m.def(
      "exact_ot",
      [](std::vector<std::vector<double>> a, std::vector<double> wa, std::vector<std::vector<double>> b,
         std::vector<double> wb) {
        const auto cost = squared_distance_matrix(a, b);
        return exact_ot(DiscreteMeasure(std::move(a), std::move(wa)), DiscreteMeasure(std::move(b), std::move(wb)), cost)
            .cost;
      },
      py::arg("points_a"), py::arg("weights_a"), py::arg("points_b"), py::arg("weights_b"),
      "Optimal squared-Euclidean transport cost.");
  m.def("w2_radial_quantile", &w2_radial_quantile, py::arg("radii_a"), py::arg("masses_a"), py::arg("radii_b"),
        py::arg("masses_b"));

  m.def(
      "ollivier",
      [](double K, double delta, double r) {
        const auto x = HyperboloidPoint::origin(2, K);
        const auto res = ollivier_expansion_check(x, std::vector<double>{1.0, 0.0, 0.0},
                                                  std::vector<double>{0.0, 1.0, 0.0}, delta, r);
        return py::make_tuple(res.exact, res.expansion);
      },
      py::arg("K"), py::arg("delta"), py::arg("r"), "(exact distance, delta (1 + K r^2 / 2)) in H^2_K.");

  m.def(
      "conservation_suite",
      [](std::uint64_t seed, int count) {
        std::vector<ConservationCase> cases;
        {
          py::gil_scoped_release release;
          cases = run_conservation_suite(seed, count);
        }
        py::list out;
        for (const auto& c : cases) {
          py::dict d;
          d["n"] = c.n;
          d["m"] = c.m;
          d["K"] = c.K;
          d["max_mass_drift"] = c.max_mass_drift;
          d["worst_lp_growth"] = c.worst_lp_growth;
          d["worst_l1_growth"] = c.worst_l1_growth;
          d["worst_energy_excess"] = c.worst_energy_excess;
          d["pass"] = c.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("seed"), py::arg("count") = 20);
}
