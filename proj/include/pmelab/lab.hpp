#pragma once

#include "pmelab/config.hpp"
#include "pmelab/report.hpp"
#include "pmelab/transport.hpp"

#include <cstdint>
#include <vector>

namespace pmelab {

/// exp{K c1 C_m [(t M^{m-1})^{2/(2+n(m-1))} v (t M^{m-1})]} with
/// C_m = C_fit^{m-1} 2^{m-2} [2 + n(m-1)]. K is the Ricci lower bound.
/// The Cartan-Hadamard variant keeps only the power term.
double stability_factor(double K, double c1, double m, int n, double M, double t, double C_fit,
                        bool cartan_hadamard = false);

/// Builds P from the nonlinearity section.
PorousNonlinearity make_nonlinearity(const NonlinearityParams& p);

/// sup rho(t) / (t^{-n/(2+n(m-1))} M^{2/(2+n(m-1))} + M), maximized over the
/// states with t > 0.
double smoothing_ratio(const Trajectory& traj, double m, int n, double M);

/// Radial density about a center, lumped into radial bins times polar-angle
/// sectors of the meridian half-plane. Points are hyperboloid coordinates in
/// H^2_K (K > 0) or Cartesian in R^2. The center sits at distance `offset`
/// from the origin along the first axis; angles are measured from that axis.
/// Cells beyond `r_extent` go into the last bin.
DiscreteMeasure meridian_cloud(const DensityField& rho, double offset, double r_extent, int radial_bins,
                               int angular_nodes);

/// Squared geodesic distances between two meridian clouds.
CostMatrix meridian_cost(const DiscreteMeasure& a, const DiscreteMeasure& b, double K);

struct W2Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// W2 between rho centered at x and rho_hat centered at y, d(x, y) = delta.
/// Upper: optimal transport between meridian clouds. Lower: sqrt(mass) times
/// the bisector bound for rho_hat.
W2Interval w2_interval(const DensityField& rho, const DensityField& rho_hat, double delta, const OtParams& ot);

Report run_smoothing_scan(const ExperimentConfig& cfg);
Report run_stability_check(const ExperimentConfig& cfg);
Report run_optimality_scan(const ExperimentConfig& cfg);
Report run_compact_support_check(const ExperimentConfig& cfg);
Report run_be_check(const ExperimentConfig& cfg);
Report run_hamiltonian_check(const ExperimentConfig& cfg);

Report run_experiment(const ExperimentConfig& cfg);

struct ConservationCase {
  int n;
  double m;
  double K;
  double max_mass_drift;    // relative
  double worst_lp_growth;   // max over steps and p of ||rho||_p(new)/||rho||_p(old) - 1
  double worst_l1_growth;   // max over steps of l1(new) - l1(old), relative to mass
  double worst_energy_excess;  // max over t of dissipated + Psi(t) - Psi(0), relative to Psi(0)
  bool pass;
};

/// Randomized sweep over n in {2,3}, m in {1.5,2,3}, K in {0,1} with paired
/// bump data; thresholds 1e-10 (mass), 1e-9 (Lp, L1) and 1e-8 (energy).
std::vector<ConservationCase> run_conservation_suite(std::uint64_t seed, int count, int threads = 0);

}  // namespace pmelab
