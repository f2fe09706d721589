#pragma once

#include "pmelab/geometry.hpp"
#include "pmelab/nonlinearity.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmelab {

/// Uniform cell-centered grid on [0, R_max] of a model manifold. Cell volumes
/// are exact integrals of the volume element.
class RadialGrid {
 public:
  RadialGrid(ModelManifold manifold, double r_max, std::size_t cells);

  const ModelManifold& manifold() const { return manifold_; }
  double r_max() const { return r_max_; }
  std::size_t size() const { return centers_.size(); }
  double dr() const { return dr_; }

  double center(std::size_t i) const { return centers_[i]; }
  /// Face i sits at r = i * dr, i = 0..size().
  double face(std::size_t i) const { return faces_[i]; }
  double volume(std::size_t i) const { return volumes_[i]; }
  /// |S^{n-1}| psi(face)^{n-1}.
  double face_area(std::size_t i) const { return face_areas_[i]; }

  const std::vector<double>& centers() const { return centers_; }
  const std::vector<double>& faces() const { return faces_; }
  const std::vector<double>& volumes() const { return volumes_; }
  const std::vector<double>& face_areas() const { return face_areas_; }
  double total_volume() const { return total_volume_; }

 private:
  ModelManifold manifold_;
  double r_max_;
  double dr_;
  std::vector<double> centers_, faces_, volumes_, face_areas_;
  double total_volume_;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

GridPtr make_grid(int n, double K, double r_max, std::size_t cells);

/// Radial density (with respect to the Riemannian volume) at time t.
struct DensityField {
  GridPtr grid;
  std::vector<double> values;
  double t = 0.0;

  DensityField() = default;
  /// Throws on negative or non-finite values or a size mismatch.
  DensityField(GridPtr grid, std::vector<double> values, double t = 0.0);

  static DensityField from_function(GridPtr grid, const std::function<double(double)>& f,
                                    double t = 0.0);
};

double mass(const DensityField& rho);
double sup_norm(const DensityField& rho);
/// Volume-weighted (sum |rho_i|^p V_i)^{1/p}; p = infinity gives the sup norm.
double lp_norm(const DensityField& rho, double p);
double l1_distance(const DensityField& a, const DensityField& b);
/// Outer face of the last cell with rho > threshold; 0 if there is none.
double support_radius(const DensityField& rho, double threshold = 1e-12);
/// sum_i Psi_eps(rho_i) V_i.
double free_energy(const DensityField& rho, const RegularizedNonlinearity& Pe);
/// Discrete Dirichlet energy of P_eps(rho): sum over interior faces of A_f dr (dP/dr)^2.
double pressure_dissipation(const DensityField& rho, const RegularizedNonlinearity& Pe);

struct SolverConfig {
  double dt_initial = 1e-6;
  double dt_max = 1e-2;
  double newton_tol = 1e-10;       // on max_i |G_i| / V_i relative to sup rho
  int newton_max_iters = 30;
  double dt_growth = 1.2;
  int easy_newton_iters = 6;       // grow dt when a step needed at most this many iterations
  int max_halvings = 30;
  double support_threshold = 1e-12;
  double outer_buffer = 0.05;      // fraction of cells that must stay empty
  std::vector<double> checkpoints; // besides t = 0 and t = T
  bool record_every_step = false;

  void validate() const;
};

struct SolverStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t newton_iterations = 0;
  int max_newton_iterations = 0;
  double min_dt = 0.0;
  double max_dt = 0.0;
};

struct Trajectory {
  std::vector<DensityField> states;
  /// Accumulated sum of dt * pressure_dissipation(new state), aligned with states.
  std::vector<double> dissipation;
  SolverStats stats;
};

class NewtonFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainTooSmall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One backward Euler step of d_t rho = Laplacian P_eps(rho) over [t, t + dt].
/// On Newton failure the interval is split in halves and retried.
DensityField step(const DensityField& state, const RegularizedNonlinearity& Pe, double dt,
                  const SolverConfig& cfg = {}, SolverStats* stats = nullptr);

Trajectory evolve(const DensityField& rho0, const RegularizedNonlinearity& Pe, double T,
                  const SolverConfig& cfg = {});

/// Evolves several data on one grid with one shared step sequence, so that
/// pairwise comparisons are made at identical times.
std::vector<Trajectory> evolve_many(const std::vector<DensityField>& data,
                                    const RegularizedNonlinearity& Pe, double T,
                                    const SolverConfig& cfg = {});

/// "rho_t<time with 9 decimals>.csv"
std::string checkpoint_filename(double t);
/// Writes columns r,rho into dir/checkpoint_filename(t); returns the path.
std::filesystem::path write_checkpoint_csv(const DensityField& rho,
                                           const std::filesystem::path& dir);

/// Constant density on the cells inside B_width with exact discrete mass M.
DensityField near_dirac_datum(GridPtr grid, double M, double width);

/// Zel'dovich-Kompaneets-Barenblatt profile for d_t rho = Laplacian rho^m on R^n.
struct Barenblatt {
  int n;
  double m;
  double M;
  double alpha;  // n / (2 + n(m-1))
  double beta;   // 1 / (2 + n(m-1))
  double k;      // alpha (m-1) / (2 m n)
  double D;      // fixed by the mass

  Barenblatt(int n, double m, double M);
  double value(double r, double t) const;
  /// Front radius sqrt(D/k) t^beta.
  double front(double t) const;
};

double barenblatt_euclidean(int n, double m, double M, double r, double t);

/// Traveling-wave barrier for the collar of width eps inside a ball.
struct TravelingWaveSupersolution {
  double C1 = 0.0;
  double C2 = 0.0;
  double eps_collar = 0.0;
  double t1 = 0.0;
  double sigma = 0.0;
  PorousNonlinearity P = PorousNonlinearity::pure_power(2.0);
};

TravelingWaveSupersolution choose_supersolution_constants(double rho0_sup, double eps_collar,
                                                          double sigma,
                                                          const PorousNonlinearity& P);

/// P^{-1}([C1 (C2 t + delta - eps/2)_+]^{m/(m-1)}), delta = distance to the outer
/// boundary of the collar, 0 <= delta <= eps, 0 <= t <= t1.
double traveling_wave_value(const TravelingWaveSupersolution& tw, double delta, double t);

/// Radius outside of which the barrier vanishes, for an outer collar boundary at R_D.
double traveling_wave_front(const TravelingWaveSupersolution& tw, double R_D, double t);

}  // namespace pmelab
