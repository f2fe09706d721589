#include "pmelab/geometry.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pmelab {

namespace {

using boost::math::quadrature::gauss;

// integral_0^x sinh(s)^k ds
double sinh_power_integral(int k, double x) {
  if (x < 0.5) {
    return gauss<double, 30>::integrate([k](double s) { return std::pow(std::sinh(s), k); }, 0.0,
                                        x);
  }
  double even = x;                    // I_0
  double odd = std::cosh(x) - 1.0;    // I_1
  if (k == 0) return even;
  if (k == 1) return odd;
  const double sh = std::sinh(x);
  const double ch = std::cosh(x);
  double prev = (k % 2 == 0) ? even : odd;
  for (int j = (k % 2 == 0) ? 2 : 3; j <= k; j += 2) {
    prev = std::pow(sh, j - 1) * ch / j - (static_cast<double>(j - 1) / j) * prev;
  }
  return prev;
}

void require_same_model(const HyperboloidPoint& a, const HyperboloidPoint& b) {
  if (a.dimension() != b.dimension() || a.curvature() != b.curvature()) {
    throw std::invalid_argument("hyperboloid points belong to different model spaces");
  }
}

std::vector<double> axpy(std::span<const double> a, double s, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
  return out;
}

}  // namespace

double unit_sphere_area(int n) {
  if (n < 1) throw DomainError("sphere dimension must be >= 0");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

ModelManifold::ModelManifold(int n, double K)
    : n_(n), K_(K), sqrt_k_(std::sqrt(std::max(K, 0.0))), sphere_area_(0.0) {
  if (n < 2) throw DomainError("model manifold dimension must be >= 2");
  if (!(K >= 0.0) || !std::isfinite(K)) {
    throw DomainError("curvature parameter K must be finite and >= 0 (Sec = -K)");
  }
  sphere_area_ = unit_sphere_area(n);
}

double ModelManifold::warping(double r) const {
  if (r < 0.0) throw DomainError("warping: negative radius " + std::to_string(r));
  if (K_ == 0.0) return r;
  return std::sinh(sqrt_k_ * r) / sqrt_k_;
}

double ModelManifold::warping_derivative(double r) const {
  if (r < 0.0) throw DomainError("warping_derivative: negative radius");
  if (K_ == 0.0) return 1.0;
  return std::cosh(sqrt_k_ * r);
}

double ModelManifold::radial_laplacian_coefficient(double r) const {
  if (r < 0.0) throw DomainError("radial_laplacian_coefficient: negative radius");
  if (r == 0.0) {
    throw DomainError("radial Laplacian coefficient is singular at r = 0; use the symmetry condition");
  }
  if (K_ == 0.0) return (n_ - 1) / r;
  return (n_ - 1) * sqrt_k_ / std::tanh(sqrt_k_ * r);
}

double ModelManifold::ball_volume(double R) const {
  if (R < 0.0) throw DomainError("ball_volume: negative radius");
  if (K_ == 0.0) return sphere_area_ * std::pow(R, n_) / n_;
  return sphere_area_ * std::pow(K_, -0.5 * n_) * sinh_power_integral(n_ - 1, sqrt_k_ * R);
}

double ModelManifold::shell_volume(double a, double b) const {
  if (a < 0.0 || b < a) throw DomainError("shell_volume: need 0 <= a <= b");
  const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / 0.05)));
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    const double hi = (p + 1 == panels) ? b : lo + h;
    sum += gauss<double, 10>::integrate(
        [this](double r) { return std::pow(warping(r), n_ - 1); }, lo, hi);
  }
  return sphere_area_ * sum;
}

double minkowski_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("minkowski_dot: size mismatch");
  }
  const std::size_t last = a.size() - 1;
  double s = 0.0;
  for (std::size_t i = 0; i < last; ++i) s += a[i] * b[i];
  return s - a[last] * b[last];
}

HyperboloidPoint::HyperboloidPoint(std::vector<double> coords, double K)
    : x_(std::move(coords)), K_(K) {
  if (!(K > 0.0)) throw DomainError("hyperboloid model requires K > 0");
  if (x_.size() < 3) throw DomainError("hyperboloid point needs at least 3 coordinates");
  if (!(x_.back() > 0.0)) throw DomainError("point is not on the upper sheet");
  const double q = -K_ * minkowski_dot(x_, x_);
  if (!(q > 0.0) || std::abs(q - 1.0) > 1e-6) {
    throw DomainError("coordinates are not on the hyperboloid <p,p> = -1/K");
  }
  const double scale = 1.0 / std::sqrt(q);
  for (double& c : x_) c *= scale;
}

HyperboloidPoint HyperboloidPoint::origin(int n, double K) {
  if (!(K > 0.0)) throw DomainError("hyperboloid model requires K > 0");
  std::vector<double> x(static_cast<std::size_t>(n) + 1, 0.0);
  x.back() = 1.0 / std::sqrt(K);
  return {std::move(x), K};
}

double geodesic_distance(const HyperboloidPoint& p, const HyperboloidPoint& q) {
  require_same_model(p, q);
  const double K = p.curvature();
  // Chord form: <p-q, p-q> = (4/K) sinh^2(sqrt(K) d / 2); avoids arccosh near 1.
  std::vector<double> c(p.coords().begin(), p.coords().end());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= q[i];
  double s2 = minkowski_dot(c, c);
  if (s2 < 0.0) {
    if (-0.5 * K * s2 < 1e-9) return 0.0;
    throw DomainError("geodesic_distance: points are not on a common sheet");
  }
  const double sk = std::sqrt(K);
  return 2.0 / sk * std::asinh(0.5 * sk * std::sqrt(s2));
}

TangentVector unit_tangent(const HyperboloidPoint& p, std::span<const double> w) {
  if (w.size() != p.coords().size()) throw std::invalid_argument("unit_tangent: size mismatch");
  TangentVector t = axpy(w, p.curvature() * minkowski_dot(w, p.coords()), p.coords());
  const double nrm2 = minkowski_dot(t, t);
  if (!(nrm2 > 0.0)) throw DomainError("unit_tangent: vector has no tangential component");
  const double inv = 1.0 / std::sqrt(nrm2);
  for (double& c : t) c *= inv;
  return t;
}

HyperboloidPoint exp_map(const HyperboloidPoint& p, std::span<const double> v, double r) {
  if (v.size() != p.coords().size()) throw std::invalid_argument("exp_map: size mismatch");
  if (r < 0.0) throw DomainError("exp_map: negative length");
  if (std::abs(minkowski_dot(p.coords(), v)) > 1e-8) {
    throw DomainError("exp_map: direction is not tangent at the base point");
  }
  if (std::abs(minkowski_dot(v, v) - 1.0) > 1e-8) {
    throw DomainError("exp_map: direction is not a unit vector");
  }
  const double sk = std::sqrt(p.curvature());
  const double ch = std::cosh(sk * r);
  const double sh = std::sinh(sk * r) / sk;
  std::vector<double> z(v.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = p[i] * ch + v[i] * sh;
  return {std::move(z), p.curvature()};
}

TangentVector parallel_transport(const HyperboloidPoint& p, std::span<const double> v,
                                 double length, std::span<const double> w) {
  const double sk = std::sqrt(p.curvature());
  const double wv = minkowski_dot(w, v);
  TangentVector out(w.begin(), w.end());
  const double ch = std::cosh(sk * length);
  const double sh = std::sinh(sk * length);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double velocity = sk * sh * p[i] + ch * v[i];
    out[i] += wv * (velocity - v[i]);
  }
  return out;
}

double signed_distance_to_bisector(const HyperboloidPoint& z, const HyperboloidPoint& x,
                                   const HyperboloidPoint& y) {
  require_same_model(z, x);
  require_same_model(x, y);
  std::vector<double> c(y.coords().begin(), y.coords().end());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= x[i];
  const double s2 = minkowski_dot(c, c);
  if (!(s2 > 0.0)) throw DomainError("signed_distance_to_bisector: x and y coincide");
  const double sk = std::sqrt(z.curvature());
  const double along_normal = minkowski_dot(z.coords(), c) / std::sqrt(s2);
  return std::asinh(sk * along_normal) / sk;
}

OllivierResult ollivier_expansion_check(const HyperboloidPoint& x, std::span<const double> v,
                                        std::span<const double> w, double delta, double r) {
  if (std::abs(minkowski_dot(v, w)) > 1e-8) {
    throw DomainError("ollivier_expansion_check: v and w must be orthogonal");
  }
  // E = exp_x(v^perp) is the bisector of y = exp_x(delta v) and its mirror image.
  const HyperboloidPoint y = exp_map(x, v, delta);
  std::vector<double> minus_v(v.begin(), v.end());
  for (double& c : minus_v) c = -c;
  const HyperboloidPoint mirror = exp_map(x, minus_v, delta);
  const TangentVector w_at_y = parallel_transport(x, v, delta, w);
  const HyperboloidPoint z = exp_map(y, w_at_y, r);
  const double exact = std::abs(signed_distance_to_bisector(z, mirror, y));
  return {exact, delta * (1.0 + 0.5 * x.curvature() * r * r)};
}

OllivierResult ollivier_expansion_check_flat(int n, double delta, double r) {
  if (n < 2) throw DomainError("ollivier_expansion_check_flat: n >= 2 required");
  std::vector<double> z(static_cast<std::size_t>(n), 0.0);
  z[0] = delta;  // y = delta e_1
  z[1] += r;     // moved along w = e_2, parallel transport is the identity
  return {std::abs(z[0]), delta};
}

}  // namespace pmelab
