#pragma once

#include "pmelab/nonlinearity.hpp"
#include "pmelab/pme_solver.hpp"

#include <cstddef>
#include <vector>

namespace pmelab {

/// Kantorovich-type potential phi on the radial grid.
struct PotentialField {
  GridPtr grid;
  std::vector<double> values;
  double t = 0.0;

  PotentialField() = default;
  PotentialField(GridPtr grid, std::vector<double> values, double t = 0.0);
  static PotentialField from_function(GridPtr grid, const std::function<double(double)>& f,
                                      double t = 0.0);
  double sup_norm() const;
};

/// Solution w of the forward linearized equation.
struct LinearizedField {
  GridPtr grid;
  std::vector<double> values;
  double t = 0.0;

  LinearizedField() = default;
  LinearizedField(GridPtr grid, std::vector<double> values, double t = 0.0);
  /// sum w_i V_i
  double integral() const;
};

/// Finite-volume Laplacian with zero flux at both ends:
/// (1/V_i) sum over faces A_f (f_j - f_i) / dr.
std::vector<double> fv_laplacian(const RadialGrid& grid, const std::vector<double>& f);

/// Centered first differences at cell centers, one-sided in the end cells.
std::vector<double> radial_gradient(const RadialGrid& grid, const std::vector<double>& f);

/// (f')^2 at cell centers.
std::vector<double> carre_du_champ(const PotentialField& f);

/// Cells excluded at each end from gamma2 and be_defect.
inline constexpr std::size_t kGammaMargin = 2;

/// 1/2 Laplacian(Gamma f) - f' (Laplacian f)'. Entries inside the margin are 0.
std::vector<double> gamma2(const PotentialField& f);

/// min over interior cells of Gamma2(f) - lambda Gamma(f) - (Laplacian f)^2 / n.
double be_defect(const PotentialField& f, double lambda, int n);

/// Size of the floating-point noise in gamma2:
/// eps_mach (sup|f| sup|f'| / dr^3 + sup|f'|^2 / dr^2). Equality cases sit at
/// this level instead of 0 on fine grids.
double gamma2_roundoff(const PotentialField& f);

/// Density along a trajectory, linear in time between stored states.
DensityField interpolate_density(const Trajectory& traj, double t);

/// Backward implicit stepping of d phi/dt = -P_eps'(rho) Laplacian phi from
/// t_grid.back() down to t_grid.front(); step k uses rho(t_grid[k+1]).
/// Result is indexed like t_grid.
std::vector<PotentialField> backward_adjoint_solve(const Trajectory& rho_traj,
                                                   const RegularizedNonlinearity& Pe,
                                                   const PotentialField& phiT,
                                                   const std::vector<double>& t_grid);

/// Forward implicit stepping of dw/dt = Laplacian(P_eps'(rho) w) with the
/// same time levels; its discrete operator is the volume-weighted adjoint of
/// the backward one, so sum w phi V is preserved exactly.
std::vector<LinearizedField> forward_linearized_solve(const Trajectory& rho_traj,
                                                      const RegularizedNonlinearity& Pe,
                                                      const LinearizedField& w0,
                                                      const std::vector<double>& t_grid);

/// sum Gamma(phi)_i rho_i V_i
double hamiltonian_energy(const DensityField& rho, const PotentialField& phi);

/// sum w_i phi_i V_i
double duality_pairing(const LinearizedField& w, const PotentialField& phi);

/// (s^{-n/(2+n(m-1))} + 1)^{m-1}
double g_m_envelope(double s, double m, int n);

/// C^{m-1} 2^{m-2} [2 + n(m-1)]
double frak_c_m(double C, double m, int n);

struct DecayParameters {
  double ricci_bound = 0.0;  // K in Ric >= -K
  double c1 = 1.0;
  double m = 2.0;
  int n = 2;
  double mass = 1.0;
  double C_fit = 1.0;
  double eps = 0.0;
};

/// exp{-2 K c1 cm [(t M^{m-1})^{2/(2+n(m-1))} v (t M^{m-1}) + eps t / (c1 cm)]}
double hamiltonian_lower_factor(const DecayParameters& p, double t);

struct DecayRecord {
  double t;             // left end of the step
  double energy;        // E at t
  double defect;        // 1/2 dE/dt + K sum Gamma(phi) P_eps(rho) V, over [t, t + dt]
  double bound;         // hamiltonian_lower_factor(t) * E(0); checked with slack 2 tol (t - t0)
  bool pointwise_ok;
  bool integrated_ok;
};

struct DecayReport {
  std::vector<DecayRecord> records;
  double tolerance = 0.0;  // 10 (max dt + dr^2) max E
  double min_defect = 0.0;
  bool pointwise_ok = true;
  bool integrated_ok = true;
};

/// phi_traj and the density samples are taken on t_grid.
DecayReport hamiltonian_decay_check(const Trajectory& rho_traj,
                                    const std::vector<PotentialField>& phi_traj,
                                    const RegularizedNonlinearity& Pe, const DecayParameters& params,
                                    const std::vector<double>& t_grid);

}  // namespace pmelab
