#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pmelab {

enum class Experiment { Smoothing, Stability, Optimality, CompactSupport, BeCheck, Hamiltonian };

Experiment parse_experiment(std::string_view name);
std::string experiment_name(Experiment e);
const std::vector<std::string>& experiment_names();

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ManifoldParams {
  int n = 2;
  double K = 1.0;  // sectional curvature -K
};

struct NonlinearityParams {
  std::string flavor = "pure_power";  // or "polynomial"
  double m = 2.0;
  double coefficient = 1.0;           // pure_power: P = coefficient rho^m
  std::vector<std::pair<double, double>> terms;  // polynomial: (coefficient, exponent)
  double c0 = 1.0, c1 = 1.0;          // polynomial only
  double eps_ratio = 1.0;             // eps = eps_ratio / (2 sup rho0)
};

struct DatumParams {
  double M = 1.0;
  double M_hat = 1.0;
  double width = 0.01;
  double width_hat = 0.01;
};

struct GridParams {
  std::size_t N = 1000;
  double R_max = 1.0;
};

/// Checkpoints are log-spaced on [t_start, T].
struct TimeParams {
  double t_start = 1e-4;
  double T = 1e-2;
  int checkpoints = 9;
};

struct SolverParams {
  double dt_initial = 1e-7;
  double dt_max = 1e-3;
  double newton_tol = 1e-10;
  int newton_max_iters = 30;
};

struct OtParams {
  std::string engine = "exact";  // or "sinkhorn"
  double ent_reg = 1e-3;         // times the median cost
  double sinkhorn_tolerance = 1e-8;
  int radial_bins = 24;
  int angular_nodes = 12;
  int bisector_radial_nodes = 4;
  int bisector_angular_nodes = 128;
};

struct SmoothingParams {
  std::vector<double> curvatures{0.0, 1.0};
  std::vector<double> masses{0.5, 1.0, 2.0, 4.0};
  double mass_time = 1e-2;
  double tolerance = 0.05;
};

struct StabilityParams {
  double delta = 0.05;
  std::vector<int> dimensions{2, 3};
  double C_fit = 0.0;  // 0: fit from the run itself
  double slack = 0.05;
  bool control = true;  // Euclidean co-centered nested pair
  double control_width = 0.05;
  double control_width_hat = 0.15;
  double control_slack = 1e-6;
};

struct OptimalityParams {
  double delta = 1e-3;
  double delta_threshold = 1e-2;
  std::vector<double> curvatures{0.25, 0.5, 1.0};
  double slope_tolerance = 0.1;
  double proportionality_tolerance = 0.1;
  double sandwich_slack = 0.05;  // absorbs the finite-width datum transient at small t
};

struct CompactSupportParams {
  double R_D = 1.0;
  double collar = 0.2;
  double datum_radius = 0.8;
  double datum_height = 1.0;
  double threshold = 1e-12;
  int checkpoints = 10;
};

struct BeCheckParams {
  std::vector<int> dimensions{2, 3};
  std::vector<double> curvatures{0.0, 1.0};
  std::vector<std::size_t> cells{200, 400, 800, 1600};
  double R_max = 2.0;
  double growth_tolerance = 0.05;
  double equality_tolerance = 1e-6;
  double lambda_gap = 1.0;  // sharpness probe at lambda = -(n-1)K + lambda_gap
  int random_probes = 16;
};

struct HamiltonianParams {
  double C_fit = 0.0;  // 0: fit from the run itself
  double potential_frequency = 2.0;
  double duality_tolerance = 1e-8;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::Smoothing;
  std::uint64_t seed = 0;
  bool cartan_hadamard = false;
  int threads = 0;  // 0: hardware concurrency
  std::string out = "pmelab_out";

  ManifoldParams manifold;
  NonlinearityParams nonlinearity;
  DatumParams datum;
  GridParams grid;
  TimeParams time;
  SolverParams solver;
  OtParams ot;
  SmoothingParams smoothing;
  StabilityParams stability;
  OptimalityParams optimality;
  CompactSupportParams compact_support;
  BeCheckParams be_check;
  HamiltonianParams hamiltonian;

  /// Per-experiment defaults (grid, time window and manifold differ).
  static ExperimentConfig defaults(Experiment e);

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Overlays TOML text on the defaults of `e`. Unknown keys, wrong types and a
/// mismatching `experiment` entry are errors.
ExperimentConfig parse_config(std::string_view toml_text, Experiment e);
ExperimentConfig load_config(const std::filesystem::path& path, Experiment e);

}  // namespace pmelab
