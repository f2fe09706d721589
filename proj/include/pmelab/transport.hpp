#pragma once

#include "pmelab/geometry.hpp"
#include "pmelab/pme_solver.hpp"

#include <cstddef>
#include <filesystem>
#include <vector>

namespace pmelab {

/// Dense row-major matrix of transport costs.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

/// Weighted point cloud. `points` may be empty when only the weights matter.
struct DiscreteMeasure {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;

  DiscreteMeasure() = default;
  explicit DiscreteMeasure(std::vector<double> weights);
  DiscreteMeasure(std::vector<std::vector<double>> points, std::vector<double> weights);

  std::size_t size() const { return weights.size(); }
  double mass() const;
};

struct PlanEntry {
  std::size_t i, j;
  double weight;
};

struct TransportPlan {
  std::size_t rows = 0, cols = 0;
  std::vector<PlanEntry> entries;  // nonzero (or basic) cells, sorted by (i, j)
  double cost = 0.0;
  /// LP dual potentials (exact solver only): u_i + v_j <= c_ij, equality on the basis.
  std::vector<double> u, v;
  std::size_t iterations = 0;

  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
};

class MassMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Transportation simplex: Vogel start, MODI potentials, Dantzig pricing with a
/// switch to Bland's rule after degenerate pivots.
TransportPlan exact_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost);

struct SinkhornOptions {
  double tolerance = 1e-8;        // l1 marginal error relative to the mass
  std::size_t max_iterations = 100000;
  double overrelaxation = 1.9;    // 1 gives plain Sinkhorn
};

/// Log-domain over-relaxed Sinkhorn, with Newton steps on the dual when the
/// iteration stalls,
/// followed by rounding onto the exact marginals.
TransportPlan sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                       double ent_reg, const SinkhornOptions& options = {});

/// W2 between radial measures carried by spheres of the given radii about a
/// common center, via monotone matching of the radial CDFs.
double w2_radial_quantile(const std::vector<double>& radii_a, const std::vector<double>& masses_a,
                          const std::vector<double>& radii_b, const std::vector<double>& masses_b);

/// Same, for two densities on one grid; cell masses sit at the cell centers.
double w2_same_center_radial(const DensityField& a, const DensityField& b);

struct DualPotential {
  std::vector<double> values;
  double s = 0.0;
};

/// Q_s phi(x_i) = min_j phi_j + d_ij^2 / (2 s); distances has rows = evaluation
/// points and columns = points carrying phi.
DualPotential hopf_lax(const DualPotential& phi, double s, const CostMatrix& distances);

/// sum_j nu_j Q_1 phi(y_j) - sum_i mu_i phi_i, with distances(i, j) = d(x_i, y_j).
/// Never exceeds half the optimal quadratic cost.
double kantorovich_lower_bound(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                               const std::vector<double>& phi, const CostMatrix& distances);

struct BisectorQuadrature {
  int radial_nodes = 4;     // Gauss-Legendre nodes per grid cell
  int angular_nodes = 128;  // Gauss-Legendre nodes in the polar angle, checked against half as many
  double tolerance = 1e-8;  // relative to delta
};

/// Lower bound for W1 between the radial profile centered at x and its copy
/// centered at y, d(x, y) = delta: the mean of the 1-Lipschitz signed distance
/// to the hypersurface through x orthogonal to the x-y geodesic, under the copy
/// at y. The profile is normalized to a probability.
double w1_bisector_lower_bound(const DensityField& rho, double delta,
                               const BisectorQuadrature& quad = {});
double w1_bisector_lower_bound(const DensityField& rho, const HyperboloidPoint& x,
                               const HyperboloidPoint& y, const BisectorQuadrature& quad = {});

/// Squared geodesic distances between two hyperboloid clouds.
CostMatrix squared_distance_matrix(const std::vector<HyperboloidPoint>& a,
                                   const std::vector<HyperboloidPoint>& b);
/// Squared Euclidean distances.
CostMatrix squared_distance_matrix(const std::vector<std::vector<double>>& a,
                                   const std::vector<std::vector<double>>& b);

/// CSV with columns i,j,weight.
void write_plan_csv(const TransportPlan& plan, const std::filesystem::path& path);
/// CSV with columns x0,...,x{d-1},weight.
void write_measure_csv(const DiscreteMeasure& measure, const std::filesystem::path& path);

}  // namespace pmelab
