#include "pmelab/hamiltonian.hpp"

#include "pmelab/tridiagonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pmelab {

namespace {

void check_values(const GridPtr& grid, const std::vector<double>& values, const char* what) {
  if (!grid) throw std::invalid_argument(std::string(what) + ": null grid");
  if (values.size() != grid->size()) throw std::invalid_argument(std::string(what) + ": size mismatch");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

void check_time_grid(const Trajectory& traj, const std::vector<double>& t_grid) {
  if (traj.states.empty()) throw std::invalid_argument("empty density trajectory");
  if (t_grid.size() < 2) throw std::invalid_argument("time grid needs at least two levels");
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    if (!(t_grid[k] > t_grid[k - 1])) throw std::invalid_argument("time grid must be increasing");
  }
  const double t0 = traj.states.front().t, t1 = traj.states.back().t;
  const double slack = 1e-12 * std::max(1.0, std::abs(t1));
  if (t_grid.front() < t0 - slack || t_grid.back() > t1 + slack) {
    throw std::invalid_argument("time grid leaves the trajectory's time range");
  }
}

// Off-diagonal couplings A_f / (dr V_i) of the finite-volume Laplacian.
struct LaplacianStencil {
  std::vector<double> lower, upper;  // coefficient of f_{i-1}, f_{i+1}
};

LaplacianStencil stencil(const RadialGrid& g) {
  const std::size_t N = g.size();
  LaplacianStencil s{std::vector<double>(N, 0.0), std::vector<double>(N, 0.0)};
  for (std::size_t i = 0; i < N; ++i) {
    if (i > 0) s.lower[i] = g.face_area(i) / (g.dr() * g.volume(i));
    if (i + 1 < N) s.upper[i] = g.face_area(i + 1) / (g.dr() * g.volume(i));
  }
  return s;
}

void check_solution(const std::vector<double>& x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + ": linear solve produced non-finite values");
  }
}

}  // namespace

PotentialField::PotentialField(GridPtr g, std::vector<double> v, double time)
    : grid(std::move(g)), values(std::move(v)), t(time) {
  check_values(grid, values, "PotentialField");
}

PotentialField PotentialField::from_function(GridPtr grid, const std::function<double(double)>& f,
                                             double t) {
  std::vector<double> v(grid->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->center(i));
  return PotentialField(std::move(grid), std::move(v), t);
}

double PotentialField::sup_norm() const {
  double s = 0.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

LinearizedField::LinearizedField(GridPtr g, std::vector<double> v, double time)
    : grid(std::move(g)), values(std::move(v)), t(time) {
  check_values(grid, values, "LinearizedField");
}

double LinearizedField::integral() const {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * grid->volume(i);
  return s;
}

std::vector<double> fv_laplacian(const RadialGrid& grid, const std::vector<double>& f) {
  if (f.size() != grid.size()) throw std::invalid_argument("fv_laplacian: size mismatch");
  const std::size_t N = grid.size();
  std::vector<double> out(N, 0.0);
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const double flux = grid.face_area(i + 1) * (f[i + 1] - f[i]) / grid.dr();
    out[i] += flux;
    out[i + 1] -= flux;
  }
  for (std::size_t i = 0; i < N; ++i) out[i] /= grid.volume(i);
  return out;
}

std::vector<double> radial_gradient(const RadialGrid& grid, const std::vector<double>& f) {
  const std::size_t N = grid.size();
  if (f.size() != N) throw std::invalid_argument("radial_gradient: size mismatch");
  std::vector<double> d(N, 0.0);
  if (N < 2) return d;
  const double h = grid.dr();
  d[0] = (f[1] - f[0]) / h;
  d[N - 1] = (f[N - 1] - f[N - 2]) / h;
  for (std::size_t i = 1; i + 1 < N; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
  return d;
}

std::vector<double> carre_du_champ(const PotentialField& f) {
  std::vector<double> d = radial_gradient(*f.grid, f.values);
  for (double& x : d) x *= x;
  return d;
}

std::vector<double> gamma2(const PotentialField& f) {
  const RadialGrid& g = *f.grid;
  const std::size_t N = g.size();
  if (N < 2 * kGammaMargin + 1) throw std::invalid_argument("gamma2: grid too small for the margin");
  const std::vector<double> gam = carre_du_champ(f);
  const std::vector<double> lap_gam = fv_laplacian(g, gam);
  const std::vector<double> lap = fv_laplacian(g, f.values);
  const std::vector<double> grad = radial_gradient(g, f.values);
  const std::vector<double> grad_lap = radial_gradient(g, lap);
  std::vector<double> out(N, 0.0);
  for (std::size_t i = kGammaMargin; i + kGammaMargin < N; ++i) {
    out[i] = 0.5 * lap_gam[i] - grad[i] * grad_lap[i];
  }
  return out;
}

double be_defect(const PotentialField& f, double lambda, int n) {
  if (n < 1) throw std::invalid_argument("be_defect: n must be positive");
  const RadialGrid& g = *f.grid;
  const std::vector<double> g2 = gamma2(f);
  const std::vector<double> gam = carre_du_champ(f);
  const std::vector<double> lap = fv_laplacian(g, f.values);
  double worst = INFINITY;
  for (std::size_t i = kGammaMargin; i + kGammaMargin < g.size(); ++i) {
    worst = std::min(worst, g2[i] - lambda * gam[i] - lap[i] * lap[i] / n);
  }
  return worst;
}

double gamma2_roundoff(const PotentialField& f) {
  const RadialGrid& g = *f.grid;
  const std::vector<double> d = radial_gradient(g, f.values);
  double sf = 0.0, sd = 0.0;
  for (double v : f.values) sf = std::max(sf, std::abs(v));
  for (double v : d) sd = std::max(sd, std::abs(v));
  const double h = g.dr();
  return std::numeric_limits<double>::epsilon() * (sf * sd / (h * h * h) + sd * sd / (h * h));
}

DensityField interpolate_density(const Trajectory& traj, double t) {
  const auto& s = traj.states;
  if (s.empty()) throw std::invalid_argument("interpolate_density: empty trajectory");
  if (t <= s.front().t) return s.front();
  if (t >= s.back().t) return s.back();
  const auto it = std::upper_bound(s.begin(), s.end(), t,
                                   [](double x, const DensityField& d) { return x < d.t; });
  const DensityField& b = *it;
  const DensityField& a = *(it - 1);
  if (b.t == a.t) return b;
  const double theta = (t - a.t) / (b.t - a.t);
  std::vector<double> v(a.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - theta) * a.values[i] + theta * b.values[i];
  return DensityField(a.grid, std::move(v), t);
}

std::vector<PotentialField> backward_adjoint_solve(const Trajectory& rho_traj,
                                                   const RegularizedNonlinearity& Pe,
                                                   const PotentialField& phiT,
                                                   const std::vector<double>& t_grid) {
  check_time_grid(rho_traj, t_grid);
  const RadialGrid& g = *phiT.grid;
  if (g.size() != rho_traj.states.front().grid->size()) {
    throw std::invalid_argument("backward_adjoint_solve: grid mismatch");
  }
  const std::size_t N = g.size(), K = t_grid.size();
  const LaplacianStencil L = stencil(g);
  std::vector<PotentialField> out(K);
  out[K - 1] = PotentialField(phiT.grid, phiT.values, t_grid[K - 1]);
  const double bound = phiT.sup_norm() + 1e-9;
  std::vector<double> sub(N), diag(N), sup(N);
  for (std::size_t k = K - 1; k-- > 0;) {
    const double dt = t_grid[k + 1] - t_grid[k];
    const DensityField rho = interpolate_density(rho_traj, t_grid[k + 1]);
    // (I - dt A L) phi^k = phi^{k+1}, A = diag P_eps'(rho)
    for (std::size_t i = 0; i < N; ++i) {
      const double a = Pe.derivative(rho.values[i]);
      sub[i] = -dt * a * L.lower[i];
      sup[i] = -dt * a * L.upper[i];
      diag[i] = 1.0 + dt * a * (L.lower[i] + L.upper[i]);
    }
    std::vector<double> phi = solve_tridiagonal(sub, diag, sup, out[k + 1].values);
    check_solution(phi, "backward_adjoint_solve");
    for (double v : phi) {
      if (std::abs(v) > bound) {
        std::ostringstream os;
        os << "backward_adjoint_solve: maximum principle violated at t = " << t_grid[k] << " (|phi| = "
           << std::abs(v) << " > " << bound << ")";
        throw std::runtime_error(os.str());
      }
    }
    out[k] = PotentialField(phiT.grid, std::move(phi), t_grid[k]);
  }
  return out;
}

std::vector<LinearizedField> forward_linearized_solve(const Trajectory& rho_traj,
                                                      const RegularizedNonlinearity& Pe,
                                                      const LinearizedField& w0,
                                                      const std::vector<double>& t_grid) {
  check_time_grid(rho_traj, t_grid);
  const RadialGrid& g = *w0.grid;
  if (g.size() != rho_traj.states.front().grid->size()) {
    throw std::invalid_argument("forward_linearized_solve: grid mismatch");
  }
  const std::size_t N = g.size(), K = t_grid.size();
  const LaplacianStencil L = stencil(g);
  std::vector<LinearizedField> out(K);
  out[0] = LinearizedField(w0.grid, w0.values, t_grid[0]);
  std::vector<double> sub(N), diag(N), sup(N), a(N);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double dt = t_grid[k + 1] - t_grid[k];
    const DensityField rho = interpolate_density(rho_traj, t_grid[k + 1]);
    for (std::size_t i = 0; i < N; ++i) a[i] = Pe.derivative(rho.values[i]);
    // (I - dt L A) w^{k+1} = w^k
    for (std::size_t i = 0; i < N; ++i) {
      sub[i] = i > 0 ? -dt * L.lower[i] * a[i - 1] : 0.0;
      sup[i] = i + 1 < N ? -dt * L.upper[i] * a[i + 1] : 0.0;
      diag[i] = 1.0 + dt * (L.lower[i] + L.upper[i]) * a[i];
    }
    std::vector<double> w = solve_tridiagonal(sub, diag, sup, out[k].values);
    check_solution(w, "forward_linearized_solve");
    out[k + 1] = LinearizedField(w0.grid, std::move(w), t_grid[k + 1]);
  }
  return out;
}

double hamiltonian_energy(const DensityField& rho, const PotentialField& phi) {
  if (rho.values.size() != phi.values.size()) throw std::invalid_argument("hamiltonian_energy: size mismatch");
  const std::vector<double> gam = carre_du_champ(phi);
  double e = 0.0;
  for (std::size_t i = 0; i < gam.size(); ++i) e += gam[i] * rho.values[i] * phi.grid->volume(i);
  return e;
}

double duality_pairing(const LinearizedField& w, const PotentialField& phi) {
  if (w.values.size() != phi.values.size()) throw std::invalid_argument("duality_pairing: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.values.size(); ++i) s += w.values[i] * phi.values[i] * w.grid->volume(i);
  return s;
}

double g_m_envelope(double s, double m, int n) {
  if (!(s > 0.0) || !(m > 1.0) || n < 1) throw std::invalid_argument("g_m_envelope: need s > 0, m > 1, n >= 1");
  return std::pow(std::pow(s, -n / (2.0 + n * (m - 1.0))) + 1.0, m - 1.0);
}

double frak_c_m(double C, double m, int n) {
  if (!(C > 0.0) || !(m >= 1.0) || n < 1) throw std::invalid_argument("frak_c_m: need C > 0, m >= 1, n >= 1");
  return std::pow(C, m - 1.0) * std::pow(2.0, m - 2.0) * (2.0 + n * (m - 1.0));
}

double hamiltonian_lower_factor(const DecayParameters& p, double t) {
  if (t < 0.0) throw std::invalid_argument("hamiltonian_lower_factor: t < 0");
  const double cm = frak_c_m(p.C_fit, p.m, p.n);
  const double s = t * std::pow(p.mass, p.m - 1.0);
  const double growth = std::max(std::pow(s, 2.0 / (2.0 + p.n * (p.m - 1.0))), s);
  return std::exp(-2.0 * p.ricci_bound * p.c1 * cm * (growth + p.eps * t / (p.c1 * cm)));
}

DecayReport hamiltonian_decay_check(const Trajectory& rho_traj,
                                    const std::vector<PotentialField>& phi_traj,
                                    const RegularizedNonlinearity& Pe, const DecayParameters& params,
                                    const std::vector<double>& t_grid) {
  check_time_grid(rho_traj, t_grid);
  if (phi_traj.size() != t_grid.size()) throw std::invalid_argument("hamiltonian_decay_check: phi/t_grid mismatch");
  const std::size_t K = t_grid.size();
  const RadialGrid& g = *phi_traj.front().grid;

  std::vector<double> energy(K), curvature_term(K);
  double max_dt = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const DensityField rho = interpolate_density(rho_traj, t_grid[k]);
    energy[k] = hamiltonian_energy(rho, phi_traj[k]);
    const std::vector<double> gam = carre_du_champ(phi_traj[k]);
    double s = 0.0;
    for (std::size_t i = 0; i < gam.size(); ++i) s += gam[i] * Pe.value(rho.values[i]) * g.volume(i);
    curvature_term[k] = params.ricci_bound * s;
    if (k > 0) max_dt = std::max(max_dt, t_grid[k] - t_grid[k - 1]);
  }

  DecayReport rep;
  const double max_e = *std::max_element(energy.begin(), energy.end());
  rep.tolerance = 10.0 * (max_dt + g.dr() * g.dr()) * max_e;
  rep.min_defect = INFINITY;
  const double t0 = t_grid.front();
  for (std::size_t k = 0; k < K; ++k) {
    DecayRecord r{};
    r.t = t_grid[k];
    r.energy = energy[k];
    r.bound = hamiltonian_lower_factor(params, t_grid[k] - t0) * energy[0];
    if (k + 1 < K) {
      const double dt = t_grid[k + 1] - t_grid[k];
      r.defect = 0.5 * (energy[k + 1] - energy[k]) / dt + 0.5 * (curvature_term[k] + curvature_term[k + 1]);
      r.pointwise_ok = r.defect >= -rep.tolerance;
      rep.min_defect = std::min(rep.min_defect, r.defect);
    } else {
      r.defect = 0.0;
      r.pointwise_ok = true;
    }
    // the pointwise allowance, integrated
    r.integrated_ok = r.energy >= r.bound - 2.0 * rep.tolerance * (t_grid[k] - t0);
    rep.pointwise_ok = rep.pointwise_ok && r.pointwise_ok;
    rep.integrated_ok = rep.integrated_ok && r.integrated_ok;
    rep.records.push_back(r);
  }
  if (K < 2) rep.min_defect = 0.0;
  return rep;
}

}  // namespace pmelab
