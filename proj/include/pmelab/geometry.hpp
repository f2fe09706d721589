#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace pmelab {

/// Thrown when an input lies outside the domain of a geometric or analytic map.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Area of the unit sphere S^{n-1} embedded in R^n (n >= 1; |S^0| = 2).
double unit_sphere_area(int n);

/// Rotationally symmetric model manifold with metric dr^2 + psi(r)^2 dtheta^2
/// and constant sectional curvature -K (K >= 0; K = 0 is Euclidean space).
///
/// The warping function is psi(r) = sinh(sqrt(K) r) / sqrt(K), psi(r) = r for K = 0.
/// Its Ricci curvature equals -(n-1) K.
class ModelManifold {
 public:
  ModelManifold(int n, double K);

  int dimension() const { return n_; }
  double curvature() const { return K_; }
  /// Lower bound on the Ricci curvature, -(n-1)K, returned as the nonnegative (n-1)K.
  double ricci_bound() const { return (n_ - 1) * K_; }
  bool is_flat() const { return K_ == 0.0; }
  double sphere_area() const { return sphere_area_; }

  double warping(double r) const;
  double warping_derivative(double r) const;

  /// Coefficient of phi' in the radial Laplace-Beltrami operator,
  /// (n-1) psi'(r)/psi(r). Singular at r = 0.
  double radial_laplacian_coefficient(double r) const;

  /// |S^{n-1}| * integral_0^R psi(r)^{n-1} dr.
  double ball_volume(double R) const;
  /// Volume of the shell a <= d(o, .) <= b, by Gauss-Legendre quadrature.
  double shell_volume(double a, double b) const;

 private:
  int n_;
  double K_;
  double sqrt_k_;
  double sphere_area_;
};

/// Minkowski product with signature (n, 1); the time-like coordinate is last.
double minkowski_dot(std::span<const double> a, std::span<const double> b);

/// A point of the upper sheet of the hyperboloid <p,p> = -1/K in R^{n,1}.
class HyperboloidPoint {
 public:
  /// Projects `coords` back onto the sheet. Throws when the drift exceeds 1e-6
  /// or the point lies on the lower sheet.
  HyperboloidPoint(std::vector<double> coords, double K);

  static HyperboloidPoint origin(int n, double K);

  std::span<const double> coords() const { return x_; }
  double operator[](std::size_t i) const { return x_[i]; }
  int dimension() const { return static_cast<int>(x_.size()) - 1; }
  double curvature() const { return K_; }

 private:
  std::vector<double> x_;
  double K_;
};

using TangentVector = std::vector<double>;

double geodesic_distance(const HyperboloidPoint& p, const HyperboloidPoint& q);

/// Removes the component of w along p and normalizes to unit Minkowski length.
TangentVector unit_tangent(const HyperboloidPoint& p, std::span<const double> w);

/// exp_p(r v) for a unit tangent vector v at p.
HyperboloidPoint exp_map(const HyperboloidPoint& p, std::span<const double> v, double r);

/// Parallel transport of the tangent vector w at p along the geodesic
/// t -> exp_p(t v), 0 <= t <= length.
TangentVector parallel_transport(const HyperboloidPoint& p, std::span<const double> v,
                                 double length, std::span<const double> w);

/// Signed distance from z to the equidistant hypersurface of x and y;
/// positive on the side of y.
double signed_distance_to_bisector(const HyperboloidPoint& z, const HyperboloidPoint& x,
                                   const HyperboloidPoint& y);

struct OllivierResult {
  double exact;
  double expansion;
};

/// Distance from exp_y(r w') to E = exp_x(v^perp), where y = exp_x(delta v) and w'
/// is w transported to y. `expansion` is delta (1 + K r^2 / 2).
OllivierResult ollivier_expansion_check(const HyperboloidPoint& x, std::span<const double> v,
                                        std::span<const double> w, double delta, double r);

/// Euclidean counterpart: the hyperplane through x orthogonal to v in R^n.
OllivierResult ollivier_expansion_check_flat(int n, double delta, double r);

}  // namespace pmelab
