#include "pmelab/pme_solver.hpp"

#include "pmelab/tridiagonal.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace pmelab {

RadialGrid::RadialGrid(ModelManifold manifold, double r_max, std::size_t cells)
    : manifold_(std::move(manifold)), r_max_(r_max), dr_(0.0), total_volume_(0.0) {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw std::invalid_argument("grid radius must be > 0");
  if (cells < 4) throw std::invalid_argument("grid needs at least 4 cells");
  dr_ = r_max / static_cast<double>(cells);
  faces_.resize(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) faces_[i] = dr_ * static_cast<double>(i);
  faces_.back() = r_max;
  centers_.resize(cells);
  volumes_.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    centers_[i] = 0.5 * (faces_[i] + faces_[i + 1]);
    volumes_[i] = manifold_.shell_volume(faces_[i], faces_[i + 1]);
    total_volume_ += volumes_[i];
  }
  face_areas_.resize(cells + 1);
  const int n = manifold_.dimension();
  for (std::size_t i = 0; i <= cells; ++i) {
    face_areas_[i] = manifold_.sphere_area() * std::pow(manifold_.warping(faces_[i]), n - 1);
  }
}

GridPtr make_grid(int n, double K, double r_max, std::size_t cells) {
  return std::make_shared<const RadialGrid>(ModelManifold(n, K), r_max, cells);
}

DensityField::DensityField(GridPtr g, std::vector<double> v, double time)
    : grid(std::move(g)), values(std::move(v)), t(time) {
  if (!grid) throw std::invalid_argument("DensityField: null grid");
  if (values.size() != grid->size()) throw std::invalid_argument("DensityField: size mismatch");
  for (double x : values) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("DensityField: values must be finite and nonnegative");
    }
  }
}

DensityField DensityField::from_function(GridPtr grid, const std::function<double(double)>& f,
                                         double t) {
  std::vector<double> v(grid->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->center(i));
  return {std::move(grid), std::move(v), t};
}

double mass(const DensityField& rho) {
  double s = 0.0;
  for (std::size_t i = 0; i < rho.values.size(); ++i) s += rho.values[i] * rho.grid->volume(i);
  return s;
}

double sup_norm(const DensityField& rho) {
  double s = 0.0;
  for (double x : rho.values) s = std::max(s, std::abs(x));
  return s;
}

double lp_norm(const DensityField& rho, double p) {
  if (std::isinf(p)) return sup_norm(rho);
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  // scale by the sup to avoid overflow for large p
  const double s = sup_norm(rho);
  if (s == 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.values.size(); ++i) {
    acc += std::pow(std::abs(rho.values[i]) / s, p) * rho.grid->volume(i);
  }
  return s * std::pow(acc, 1.0 / p);
}

double l1_distance(const DensityField& a, const DensityField& b) {
  if (a.grid != b.grid && (a.grid->size() != b.grid->size() || a.grid->r_max() != b.grid->r_max())) {
    throw std::invalid_argument("l1_distance: fields live on different grids");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    s += std::abs(a.values[i] - b.values[i]) * a.grid->volume(i);
  }
  return s;
}

double support_radius(const DensityField& rho, double threshold) {
  for (std::size_t i = rho.values.size(); i-- > 0;) {
    if (rho.values[i] > threshold) return rho.grid->face(i + 1);
  }
  return 0.0;
}

double free_energy(const DensityField& rho, const RegularizedNonlinearity& Pe) {
  double s = 0.0;
  for (std::size_t i = 0; i < rho.values.size(); ++i) {
    s += potential_psi(Pe, rho.values[i]) * rho.grid->volume(i);
  }
  return s;
}

double pressure_dissipation(const DensityField& rho, const RegularizedNonlinearity& Pe) {
  const RadialGrid& g = *rho.grid;
  const double dr = g.dr();
  double s = 0.0;
  double p_left = Pe.value(rho.values[0]);
  for (std::size_t f = 1; f < g.size(); ++f) {
    const double p_right = Pe.value(rho.values[f]);
    const double grad = (p_right - p_left) / dr;
    s += g.face_area(f) * dr * grad * grad;
    p_left = p_right;
  }
  return s;
}

void SolverConfig::validate() const {
  if (!(dt_initial > 0.0) || !(dt_max > 0.0) || !(newton_tol > 0.0) || newton_max_iters < 1 ||
      !(dt_growth >= 1.0) || max_halvings < 0 || !(support_threshold >= 0.0) ||
      !(outer_buffer >= 0.0 && outer_buffer < 1.0)) {
    throw std::invalid_argument("SolverConfig: parameters out of range");
  }
  for (double c : checkpoints) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("SolverConfig: bad checkpoint");
  }
}

namespace {

struct NewtonResult {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

// Residual G_i = (rho_i - old_i) V_i - dt (F_{i+1/2} - F_{i-1/2}), scaled by 1/V_i.
double residual(const RadialGrid& g, const std::vector<double>& coef, const std::vector<double>& old,
                const std::vector<double>& rho, const std::vector<double>& p, double dt,
                std::vector<double>& G) {
  const std::size_t N = g.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double div = 0.0;
    if (i + 1 < N) div += coef[i + 1] * (p[i + 1] - p[i]);
    if (i > 0) div -= coef[i] * (p[i] - p[i - 1]);
    G[i] = (rho[i] - old[i]) * g.volume(i) - dt * div;
    worst = std::max(worst, std::abs(G[i]) / g.volume(i));
  }
  return worst;
}

NewtonResult newton_solve(const RadialGrid& g, const RegularizedNonlinearity& Pe,
                          const std::vector<double>& old, double dt, const SolverConfig& cfg,
                          std::vector<double>& rho) {
  const std::size_t N = g.size();
  std::vector<double> coef(N + 1, 0.0);  // A_f / dr on interior faces, zero flux at both ends
  for (std::size_t f = 1; f < N; ++f) coef[f] = g.face_area(f) / g.dr();

  double scale = 0.0;
  for (double x : old) scale = std::max(scale, x);
  scale = std::max(scale, std::numeric_limits<double>::min());
  const double target = cfg.newton_tol * scale;

  rho = old;
  std::vector<double> p(N), dp(N), G(N), sub(N), diag(N), sup(N), trial(N), ptrial(N), Gtrial(N);
  for (std::size_t i = 0; i < N; ++i) p[i] = Pe.value(rho[i]);
  double res = residual(g, coef, old, rho, p, dt, G);

  NewtonResult out;
  for (int it = 0; it <= cfg.newton_max_iters; ++it) {
    out.iterations = it;
    out.residual = res;
    if (res <= target) {
      out.converged = true;
      return out;
    }
    if (it == cfg.newton_max_iters || !std::isfinite(res)) break;

    for (std::size_t i = 0; i < N; ++i) dp[i] = Pe.derivative(rho[i]);
    for (std::size_t i = 0; i < N; ++i) {
      const double left = coef[i];
      const double right = (i + 1 < N) ? coef[i + 1] : 0.0;
      diag[i] = g.volume(i) + dt * (left + right) * dp[i];
      sub[i] = (i > 0) ? -dt * left * dp[i - 1] : 0.0;
      sup[i] = (i + 1 < N) ? -dt * right * dp[i + 1] : 0.0;
    }
    std::vector<double> rhs(N);
    for (std::size_t i = 0; i < N; ++i) rhs[i] = -G[i];
    const std::vector<double> delta = solve_tridiagonal(sub, diag, sup, std::move(rhs));

    // Damped update. Any step length keeps the discrete mass, because the
    // residual's column sums only see the volume term.
    double lambda = 1.0;
    double res_trial = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 12; ++k) {
      for (std::size_t i = 0; i < N; ++i) {
        trial[i] = rho[i] + lambda * delta[i];
        ptrial[i] = Pe.value(trial[i]);
      }
      res_trial = residual(g, coef, old, trial, ptrial, dt, Gtrial);
      if (res_trial < res || res_trial <= target) break;
      lambda *= 0.5;
    }
    if (!(res_trial < res) && !(res_trial <= target)) break;
    rho.swap(trial);
    p.swap(ptrial);
    G.swap(Gtrial);
    res = res_trial;
  }
  return out;
}

// Converged iterates may carry round-off negatives far ahead of the front.
bool finalize(std::vector<double>& rho) {
  double scale = 0.0;
  for (double x : rho) scale = std::max(scale, x);
  for (double& x : rho) {
    if (x < 0.0) {
      if (x < -1e-9 * scale) return false;
      x = 0.0;
    }
  }
  return true;
}

// Tries one backward Euler solve of length dt on every state.
bool try_step(const std::vector<std::vector<double>>& olds, const RadialGrid& g,
              const RegularizedNonlinearity& Pe, double dt, const SolverConfig& cfg,
              std::vector<std::vector<double>>& out, int& iterations) {
  out.resize(olds.size());
  iterations = 0;
  for (std::size_t k = 0; k < olds.size(); ++k) {
    NewtonResult r = newton_solve(g, Pe, olds[k], dt, cfg, out[k]);
    iterations = std::max(iterations, r.iterations);
    if (!r.converged || !finalize(out[k])) return false;
  }
  return true;
}

void record_step(SolverStats* stats, double dt, int iterations) {
  if (!stats) return;
  stats->steps += 1;
  stats->newton_iterations += static_cast<std::size_t>(iterations);
  stats->max_newton_iterations = std::max(stats->max_newton_iterations, iterations);
  stats->min_dt = stats->steps == 1 ? dt : std::min(stats->min_dt, dt);
  stats->max_dt = std::max(stats->max_dt, dt);
}

// Advances all states by exactly dt, splitting the interval on failure.
void advance(std::vector<std::vector<double>>& states, const RadialGrid& g,
             const RegularizedNonlinearity& Pe, double dt, const SolverConfig& cfg, int depth,
             SolverStats* stats, int& iterations) {
  std::vector<std::vector<double>> next;
  if (try_step(states, g, Pe, dt, cfg, next, iterations)) {
    states.swap(next);
    record_step(stats, dt, iterations);
    return;
  }
  if (stats) stats->rejected += 1;
  if (depth >= cfg.max_halvings) {
    std::ostringstream os;
    os << "Newton iteration failed to converge: dt=" << dt << " after " << depth
       << " halvings (tol=" << cfg.newton_tol << ", max iters=" << cfg.newton_max_iters << ")";
    throw NewtonFailure(os.str());
  }
  int it1 = 0, it2 = 0;
  advance(states, g, Pe, 0.5 * dt, cfg, depth + 1, stats, it1);
  advance(states, g, Pe, 0.5 * dt, cfg, depth + 1, stats, it2);
  iterations = cfg.newton_max_iters + 1;  // signals a hard step to the caller
}

void check_support(const std::vector<double>& rho, const RadialGrid& g, const SolverConfig& cfg,
                   double t) {
  const std::size_t N = g.size();
  const std::size_t first =
      N - std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.outer_buffer * N)));
  for (std::size_t i = first; i < N; ++i) {
    if (rho[i] > cfg.support_threshold) {
      std::ostringstream os;
      os << "domain too small: density " << rho[i] << " at r=" << g.center(i) << " (t=" << t
         << ") inside the outer " << cfg.outer_buffer * 100
         << "% buffer; solutions have compact support, enlarge r_max";
      throw DomainTooSmall(os.str());
    }
  }
}

}  // namespace

DensityField step(const DensityField& state, const RegularizedNonlinearity& Pe, double dt,
                  const SolverConfig& cfg, SolverStats* stats) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
  cfg.validate();
  std::vector<std::vector<double>> states{state.values};
  int iterations = 0;
  advance(states, *state.grid, Pe, dt, cfg, 0, stats, iterations);
  return {state.grid, std::move(states[0]), state.t + dt};
}

std::vector<Trajectory> evolve_many(const std::vector<DensityField>& data,
                                    const RegularizedNonlinearity& Pe, double T,
                                    const SolverConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("evolve: no initial data");
  if (!(T >= 0.0)) throw std::invalid_argument("evolve: horizon must be >= 0");
  const GridPtr grid = data.front().grid;
  for (const auto& d : data) {
    if (d.grid != grid) throw std::invalid_argument("evolve: all data must share one grid");
  }

  std::vector<double> marks;
  for (double c : cfg.checkpoints) {
    if (c > 0.0 && c < T) marks.push_back(c);
  }
  if (T > 0.0) marks.push_back(T);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  std::vector<Trajectory> out(data.size());
  std::vector<std::vector<double>> states;
  for (std::size_t k = 0; k < data.size(); ++k) {
    out[k].states.push_back(DensityField(grid, data[k].values, 0.0));
    out[k].dissipation.push_back(0.0);
    states.push_back(data[k].values);
    check_support(states.back(), *grid, cfg, 0.0);
  }
  std::vector<double> dissipated(data.size(), 0.0);
  SolverStats stats;

  double t = 0.0;
  double dt = std::min(cfg.dt_initial, cfg.dt_max);
  for (double mark : marks) {
    while (t < mark) {
      double h = std::min(dt, mark - t);
      // avoid a sliver step right before a checkpoint
      if (mark - (t + h) < 1e-3 * h) h = mark - t;
      int iterations = 0;
      advance(states, *grid, Pe, h, cfg, 0, &stats, iterations);
      t = (h == mark - t) ? mark : t + h;
      for (std::size_t k = 0; k < states.size(); ++k) {
        DensityField now(grid, states[k], t);
        dissipated[k] += h * pressure_dissipation(now, Pe);
        check_support(states[k], *grid, cfg, t);
        if (cfg.record_every_step && t < mark) {
          out[k].states.push_back(std::move(now));
          out[k].dissipation.push_back(dissipated[k]);
        }
      }
      if (iterations <= cfg.easy_newton_iters) {
        dt = std::min(dt * cfg.dt_growth, cfg.dt_max);
      } else if (iterations > cfg.newton_max_iters) {
        dt = std::max(0.5 * dt, std::numeric_limits<double>::min());
      }
    }
    for (std::size_t k = 0; k < states.size(); ++k) {
      out[k].states.push_back(DensityField(grid, states[k], mark));
      out[k].dissipation.push_back(dissipated[k]);
    }
  }
  for (auto& traj : out) traj.stats = stats;
  return out;
}

Trajectory evolve(const DensityField& rho0, const RegularizedNonlinearity& Pe, double T,
                  const SolverConfig& cfg) {
  return std::move(evolve_many({rho0}, Pe, T, cfg).front());
}

std::string checkpoint_filename(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "rho_t%.9f.csv", t);
  return buf;
}

std::filesystem::path write_checkpoint_csv(const DensityField& rho,
                                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / checkpoint_filename(rho.t);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "r,rho\n";
  char buf[96];
  for (std::size_t i = 0; i < rho.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", rho.grid->center(i), rho.values[i]);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
  return path;
}

DensityField near_dirac_datum(GridPtr grid, double M, double width) {
  if (!(M > 0.0)) throw std::invalid_argument("near_dirac_datum: mass must be > 0");
  if (width < 2.0 * grid->dr() * (1.0 - 1e-12)) {
    throw std::invalid_argument("near_dirac_datum: width must cover at least 2 cells");
  }
  std::size_t cells = 0;
  double vol = 0.0;
  while (cells < grid->size() && grid->face(cells + 1) <= width * (1.0 + 1e-12)) {
    vol += grid->volume(cells);
    ++cells;
  }
  std::vector<double> v(grid->size(), 0.0);
  const double c = M / vol;
  for (std::size_t i = 0; i < cells; ++i) v[i] = c;
  return {std::move(grid), std::move(v), 0.0};
}

Barenblatt::Barenblatt(int n_, double m_, double M_) : n(n_), m(m_), M(M_) {
  if (n < 1 || !(m > 1.0) || !(M > 0.0)) throw std::invalid_argument("Barenblatt: need n >= 1, m > 1, M > 0");
  alpha = n / (2.0 + n * (m - 1.0));
  beta = alpha / n;
  k = alpha * (m - 1.0) / (2.0 * m * n);
  // M = D^{1/(m-1) + n/2} k^{-n/2} |S^{n-1}| (1/2) B(n/2, 1/(m-1) + 1)
  const double q = 1.0 / (m - 1.0);
  const double shape = unit_sphere_area(n) * 0.5 * boost::math::beta(0.5 * n, q + 1.0) *
                       std::pow(k, -0.5 * n);
  D = std::pow(M / shape, 1.0 / (q + 0.5 * n));
}

double Barenblatt::value(double r, double t) const {
  if (!(t > 0.0)) throw std::invalid_argument("Barenblatt: t must be > 0");
  const double s = D - k * r * r * std::pow(t, -2.0 * beta);
  if (s <= 0.0) return 0.0;
  return std::pow(t, -alpha) * std::pow(s, 1.0 / (m - 1.0));
}

double Barenblatt::front(double t) const {
  if (!(t > 0.0)) throw std::invalid_argument("Barenblatt: t must be > 0");
  return std::sqrt(D / k) * std::pow(t, beta);
}

double barenblatt_euclidean(int n, double m, double M, double r, double t) {
  return Barenblatt(n, m, M).value(r, t);
}

TravelingWaveSupersolution choose_supersolution_constants(double rho0_sup, double eps_collar,
                                                          double sigma,
                                                          const PorousNonlinearity& P) {
  if (!(rho0_sup > 0.0) || !(eps_collar > 0.0) || !(sigma >= 0.0)) {
    throw std::invalid_argument("choose_supersolution_constants: inputs must be positive");
  }
  const double m = P.m(), c0 = P.c0(), c1 = P.c1();
  TravelingWaveSupersolution tw;
  tw.P = P;
  tw.eps_collar = eps_collar;
  tw.sigma = sigma;
  tw.C1 = 2.0 / eps_collar * std::pow(c1, (m - 1.0) / m) * std::pow(rho0_sup, m - 1.0);
  tw.C2 = tw.C1 * c1 * m / ((m - 1.0) * std::pow(c0, (m - 1.0) / m)) *
          (1.0 + 3.0 * (m - 1.0) * sigma * eps_collar / 4.0);
  tw.t1 = eps_collar / (4.0 * tw.C2);
  return tw;
}

double traveling_wave_value(const TravelingWaveSupersolution& tw, double delta, double t) {
  if (t < 0.0 || t > tw.t1 * (1.0 + 1e-12)) {
    throw DomainError("traveling_wave_value: t outside [0, t1]");
  }
  if (delta < 0.0 || delta > tw.eps_collar * (1.0 + 1e-12)) {
    throw DomainError("traveling_wave_value: delta outside [0, eps]");
  }
  const double m = tw.P.m();
  const double s = tw.C2 * t + delta - 0.5 * tw.eps_collar;
  if (s <= 0.0) return 0.0;
  return tw.P.inverse(std::pow(tw.C1 * s, m / (m - 1.0)));
}

double traveling_wave_front(const TravelingWaveSupersolution& tw, double R_D, double t) {
  return R_D - 0.5 * tw.eps_collar + tw.C2 * t;
}

}  // namespace pmelab
