#include "pmelab/transport.hpp"

#include "pmelab/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace pmelab {

namespace {

void check_weights(const std::vector<double>& w) {
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("measure weights must be finite and nonnegative");
    }
  }
}

void check_balance(double ma, double mb) {
  if (std::abs(ma - mb) > 1e-10 * std::max({ma, mb, 1e-300})) {
    std::ostringstream os;
    os << "measures have different masses (" << ma << " vs " << mb
       << "); the transport distance is infinite";
    throw MassMismatch(os.str());
  }
}

void check_shape(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& c) {
  if (c.rows() != mu.size() || c.cols() != nu.size()) {
    throw std::invalid_argument("cost matrix shape does not match the measures");
  }
  if (mu.size() == 0 || nu.size() == 0) throw std::invalid_argument("empty measure");
  for (double x : c.data()) {
    if (!std::isfinite(x)) throw std::invalid_argument("cost matrix has non-finite entries");
  }
}

// Transportation simplex on a spanning-tree basis.
class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> a, std::vector<double> b, const CostMatrix& c)
      : m_(a.size()), n_(b.size()), a_(std::move(a)), b_(std::move(b)), c_(c) {
    double cmax = 0.0;
    for (double x : c.data()) cmax = std::max(cmax, std::abs(x));
    tol_ = 1e-12 * std::max(1.0, cmax);
  }

  TransportPlan solve() {
    vogel();
    std::size_t iterations = 0;
    bool bland = false;
    const std::size_t cap = 100 * (m_ + n_) * (m_ + n_) + 1000;
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    while (true) {
      potentials();
      std::size_t ei = 0, ej = 0;
      if (!entering(bland, ei, ej)) break;
      if (++iterations > cap) throw std::runtime_error("transportation simplex: iteration cap reached");
      const double theta = pivot(ei, ej);
      bland = (theta == 0.0);
    }
    TransportPlan plan;
    plan.rows = m_;
    plan.cols = n_;
    plan.iterations = iterations;
    for (const Cell& cell : basis_) {
      if (cell.flow > 0.0) plan.entries.push_back({cell.i, cell.j, cell.flow});
    }
    std::sort(plan.entries.begin(), plan.entries.end(), [](const PlanEntry& x, const PlanEntry& y) {
      return x.i != y.i ? x.i < y.i : x.j < y.j;
    });
    for (const PlanEntry& e : plan.entries) plan.cost += e.weight * c_(e.i, e.j);
    plan.u = u_;
    plan.v = v_;
    return plan;
  }

 private:
  struct Cell {
    std::size_t i, j;
    double flow;
  };

  std::size_t m_, n_;
  std::vector<double> a_, b_;
  const CostMatrix& c_;
  double tol_;
  std::vector<Cell> basis_;
  std::vector<std::vector<std::size_t>> row_cells_, col_cells_;
  std::vector<double> u_, v_;

  void add_cell(std::size_t i, std::size_t j, double flow) {
    basis_.push_back({i, j, flow});
  }

  void rebuild_adjacency() {
    row_cells_.assign(m_, {});
    col_cells_.assign(n_, {});
    for (std::size_t k = 0; k < basis_.size(); ++k) {
      row_cells_[basis_[k].i].push_back(k);
      col_cells_[basis_[k].j].push_back(k);
    }
  }

  void vogel() {
    std::vector<double> s = a_, d = b_;
    std::vector<char> row_on(m_, 1), col_on(n_, 1);
    std::size_t rows_left = m_, cols_left = n_;
    const double inf = std::numeric_limits<double>::infinity();

    while (rows_left > 0 && cols_left > 0) {
      // penalty = gap between the two cheapest active cells of a line
      double best_pen = -1.0;
      bool best_is_row = true;
      std::size_t best_line = 0;
      for (std::size_t i = 0; i < m_; ++i) {
        if (!row_on[i]) continue;
        double lo1 = inf, lo2 = inf;
        for (std::size_t j = 0; j < n_; ++j) {
          if (!col_on[j]) continue;
          const double x = c_(i, j);
          if (x < lo1) {
            lo2 = lo1;
            lo1 = x;
          } else if (x < lo2) {
            lo2 = x;
          }
        }
        const double pen = (lo2 == inf) ? lo1 : lo2 - lo1;
        if (pen > best_pen) {
          best_pen = pen;
          best_is_row = true;
          best_line = i;
        }
      }
      for (std::size_t j = 0; j < n_; ++j) {
        if (!col_on[j]) continue;
        double lo1 = inf, lo2 = inf;
        for (std::size_t i = 0; i < m_; ++i) {
          if (!row_on[i]) continue;
          const double x = c_(i, j);
          if (x < lo1) {
            lo2 = lo1;
            lo1 = x;
          } else if (x < lo2) {
            lo2 = x;
          }
        }
        const double pen = (lo2 == inf) ? lo1 : lo2 - lo1;
        if (pen > best_pen) {
          best_pen = pen;
          best_is_row = false;
          best_line = j;
        }
      }

      std::size_t bi = 0, bj = 0;
      if (best_is_row) {
        bi = best_line;
        double lo = inf;
        for (std::size_t j = 0; j < n_; ++j) {
          if (col_on[j] && c_(bi, j) < lo) {
            lo = c_(bi, j);
            bj = j;
          }
        }
      } else {
        bj = best_line;
        double lo = inf;
        for (std::size_t i = 0; i < m_; ++i) {
          if (row_on[i] && c_(i, bj) < lo) {
            lo = c_(i, bj);
            bi = i;
          }
        }
      }

      const double q = std::min(s[bi], d[bj]);
      add_cell(bi, bj, q);
      s[bi] -= q;
      d[bj] -= q;
      // Exactly one line leaves per allocation (both on the last one), which
      // keeps m + n - 1 basic cells forming a spanning tree.
      if (rows_left == 1 && cols_left == 1) {
        row_on[bi] = col_on[bj] = 0;
        rows_left = cols_left = 0;
      } else if (rows_left == 1) {
        col_on[bj] = 0;
        --cols_left;
      } else if (cols_left == 1) {
        row_on[bi] = 0;
        --rows_left;
      } else if (s[bi] <= d[bj]) {
        row_on[bi] = 0;
        --rows_left;
        s[bi] = 0.0;
      } else {
        col_on[bj] = 0;
        --cols_left;
        d[bj] = 0.0;
      }
    }
    rebuild_adjacency();
  }

  void potentials() {
    // BFS over the bipartite tree: nodes 0..m-1 are rows, m..m+n-1 columns.
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> queue;
    queue.reserve(m_ + n_);
    u_[0] = 0.0;
    seen[0] = 1;
    queue.push_back(0);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t node = queue[head];
      if (node < m_) {
        for (std::size_t k : row_cells_[node]) {
          const std::size_t j = basis_[k].j;
          if (seen[m_ + j]) continue;
          v_[j] = c_(node, j) - u_[node];
          seen[m_ + j] = 1;
          queue.push_back(m_ + j);
        }
      } else {
        const std::size_t j = node - m_;
        for (std::size_t k : col_cells_[j]) {
          const std::size_t i = basis_[k].i;
          if (seen[i]) continue;
          u_[i] = c_(i, j) - v_[j];
          seen[i] = 1;
          queue.push_back(i);
        }
      }
    }
    if (queue.size() != m_ + n_) throw std::logic_error("transportation simplex: basis is not a tree");
  }

  bool entering(bool bland, std::size_t& ei, std::size_t& ej) const {
    double best = -tol_;
    bool found = false;
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double r = c_(i, j) - u_[i] - v_[j];
        if (r < best) {
          ei = i;
          ej = j;
          found = true;
          if (bland) return true;
          best = r;
        }
      }
    }
    return found;
  }

  // Returns the step length theta.
  double pivot(std::size_t ei, std::size_t ej) {
    // path in the tree from row ei to column ej
    const std::size_t target = m_ + ej;
    std::vector<std::size_t> parent_cell(m_ + n_, SIZE_MAX);
    std::vector<std::size_t> parent_node(m_ + n_, SIZE_MAX);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> queue{ei};
    seen[ei] = 1;
    for (std::size_t head = 0; head < queue.size() && !seen[target]; ++head) {
      const std::size_t node = queue[head];
      const auto& cells = node < m_ ? row_cells_[node] : col_cells_[node - m_];
      for (std::size_t k : cells) {
        const std::size_t other = node < m_ ? m_ + basis_[k].j : basis_[k].i;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_cell[other] = k;
        parent_node[other] = node;
        queue.push_back(other);
      }
    }
    // cells from column ej back to row ei; signs alternate starting with "-"
    std::vector<std::size_t> path;
    for (std::size_t node = target; node != ei; node = parent_node[node]) path.push_back(parent_cell[node]);

    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = SIZE_MAX;
    for (std::size_t p = 0; p < path.size(); p += 2) {
      const Cell& cell = basis_[path[p]];
      const bool smaller = cell.flow < theta;
      const bool tie_bland = cell.flow == theta && leave != SIZE_MAX &&
                             (cell.i < basis_[leave].i ||
                              (cell.i == basis_[leave].i && cell.j < basis_[leave].j));
      if (smaller || tie_bland) {
        theta = cell.flow;
        leave = path[p];
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) {
      Cell& cell = basis_[path[p]];
      cell.flow += (p % 2 == 0) ? -theta : theta;
    }
    basis_[leave] = {ei, ej, theta};
    rebuild_adjacency();
    return theta;
  }
};

double log_sum_exp(const std::vector<double>& x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(std::vector<double> w) : weights(std::move(w)) {
  check_weights(weights);
}

DiscreteMeasure::DiscreteMeasure(std::vector<std::vector<double>> p, std::vector<double> w)
    : points(std::move(p)), weights(std::move(w)) {
  check_weights(weights);
  if (points.size() != weights.size()) throw std::invalid_argument("points and weights differ in size");
}

double DiscreteMeasure::mass() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

std::vector<double> TransportPlan::row_sums() const {
  std::vector<double> r(rows, 0.0);
  for (const auto& e : entries) r[e.i] += e.weight;
  return r;
}

std::vector<double> TransportPlan::col_sums() const {
  std::vector<double> c(cols, 0.0);
  for (const auto& e : entries) c[e.j] += e.weight;
  return c;
}

TransportPlan exact_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost) {
  check_shape(mu, nu, cost);
  const double ma = mu.mass(), mb = nu.mass();
  check_balance(ma, mb);
  std::vector<double> b = nu.weights;
  // absorb the round-off imbalance in the largest demand
  const std::size_t jmax =
      static_cast<std::size_t>(std::max_element(b.begin(), b.end()) - b.begin());
  b[jmax] = std::max(0.0, b[jmax] + (ma - mb));
  return TransportSimplex(mu.weights, std::move(b), cost).solve();
}

namespace {

struct SinkhornState {
  const CostMatrix& cost;
  const std::vector<double>& a;
  const std::vector<double>& b;
  double reg;
  std::vector<double> f, g;
  std::vector<std::size_t> rows, cols;  // atoms with positive weight

  double entry(std::size_t i, std::size_t j) const {
    return std::exp((f[i] + g[j] - cost(i, j)) / reg);
  }

  // max of the two l1 marginal errors
  double marginal_error() const {
    double row_err = 0.0, col_err = 0.0;
    std::vector<double> cs(b.size(), 0.0);
    for (std::size_t i : rows) {
      double rs = 0.0;
      for (std::size_t j : cols) {
        const double p = entry(i, j);
        rs += p;
        cs[j] += p;
      }
      row_err += std::abs(rs - a[i]);
    }
    for (std::size_t j : cols) col_err += std::abs(cs[j] - b[j]);
    return std::max(row_err, col_err);
  }

  void sweep(double omega, std::vector<double>& buf) {
    buf.resize(cols.size());
    for (std::size_t i : rows) {
      for (std::size_t k = 0; k < cols.size(); ++k) buf[k] = (g[cols[k]] - cost(i, cols[k])) / reg;
      f[i] = (1.0 - omega) * f[i] + omega * reg * (std::log(a[i]) - log_sum_exp(buf));
    }
    buf.resize(rows.size());
    for (std::size_t j : cols) {
      for (std::size_t k = 0; k < rows.size(); ++k) buf[k] = (f[rows[k]] - cost(rows[k], j)) / reg;
      g[j] = (1.0 - omega) * g[j] + omega * reg * (std::log(b[j]) - log_sum_exp(buf));
    }
  }

  double dual_objective() const {
    double v = 0.0;
    for (std::size_t i : rows) v += a[i] * f[i];
    for (std::size_t j : cols) v += b[j] * g[j];
    for (std::size_t i : rows)
      for (std::size_t j : cols) v -= reg * entry(i, j);
    return v;
  }

  // Damped Newton step on the concave dual with the last column potential
  // held fixed. Returns false when no ascent was possible.
  bool newton_step() {
    const std::size_t nr = rows.size(), nc = cols.size(), dim = nr + nc - 1;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd grad(static_cast<Eigen::Index>(dim));
    std::vector<double> cs(nc, 0.0);
    for (std::size_t p = 0; p < nr; ++p) {
      double rs = 0.0;
      for (std::size_t q = 0; q < nc; ++q) {
        const double P = entry(rows[p], cols[q]);
        rs += P;
        cs[q] += P;
        if (q + 1 < nc) {
          H(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(nr + q)) = P / reg;
          H(static_cast<Eigen::Index>(nr + q), static_cast<Eigen::Index>(p)) = P / reg;
        }
      }
      H(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)) = rs / reg;
      grad(static_cast<Eigen::Index>(p)) = a[rows[p]] - rs;
    }
    for (std::size_t q = 0; q + 1 < nc; ++q) {
      H(static_cast<Eigen::Index>(nr + q), static_cast<Eigen::Index>(nr + q)) = cs[q] / reg;
      grad(static_cast<Eigen::Index>(nr + q)) = b[cols[q]] - cs[q];
    }
    // Near-singular directions (components of the plan joined only by tiny
    // entries) get a floored eigenvalue; the trust region then limits the step.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    if (eig.info() != Eigen::Success) return false;
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const double floor = 1e-14 * std::max(lam.maxCoeff(), 1e-300);
    Eigen::VectorXd coef = eig.eigenvectors().transpose() * grad;
    for (Eigen::Index k = 0; k < coef.size(); ++k) coef(k) /= std::max(lam(k), floor);
    Eigen::VectorXd step = eig.eigenvectors() * coef;
    if (!step.allFinite()) return false;
    const double longest = step.cwiseAbs().maxCoeff();
    if (longest > 20.0 * reg) step *= 20.0 * reg / longest;

    const std::vector<double> f0 = f, g0 = g;
    const double F0 = dual_objective();
    const double slope = grad.dot(step);
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      for (std::size_t p = 0; p < nr; ++p) f[rows[p]] = f0[rows[p]] + t * step(static_cast<Eigen::Index>(p));
      for (std::size_t q = 0; q + 1 < nc; ++q)
        g[cols[q]] = g0[cols[q]] + t * step(static_cast<Eigen::Index>(nr + q));
      if (dual_objective() >= F0 + 1e-4 * t * slope) return true;
    }
    f = f0;
    g = g0;
    return false;
  }
};

// Above this many atoms the dense Newton polish is skipped.
constexpr std::size_t kNewtonMaxAtoms = 1500;

}  // namespace

TransportPlan sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                       double ent_reg, const SinkhornOptions& options) {
  check_shape(mu, nu, cost);
  if (!(ent_reg > 0.0)) throw std::invalid_argument("sinkhorn: ent_reg must be > 0");
  if (!(options.overrelaxation >= 1.0 && options.overrelaxation < 2.0)) {
    throw std::invalid_argument("sinkhorn: overrelaxation must lie in [1, 2)");
  }
  const double M = mu.mass();
  check_balance(M, nu.mass());
  const std::size_t m = mu.size(), n = nu.size();
  const double ninf = -std::numeric_limits<double>::infinity();

  SinkhornState st{cost, mu.weights, nu.weights, ent_reg, std::vector<double>(m, ninf),
                   std::vector<double>(n, ninf), {}, {}};
  for (std::size_t i = 0; i < m; ++i)
    if (mu.weights[i] > 0.0) st.rows.push_back(i), st.f[i] = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (nu.weights[j] > 0.0) st.cols.push_back(j), st.g[j] = 0.0;

  std::vector<double> buf;
  double omega = options.overrelaxation;
  double err = std::numeric_limits<double>::infinity(), best = err;
  std::size_t it = 0, last_gain = 0;
  const bool newton_ok = st.rows.size() + st.cols.size() <= kNewtonMaxAtoms;
  while (it < options.max_iterations) {
    st.sweep(omega, buf);
    ++it;
    err = st.marginal_error() / M;
    if (err < options.tolerance) break;
    if (err < 0.99 * best) {
      best = err;
      last_gain = it;
      continue;
    }
    if (it - last_gain <= 200) continue;
    // Stalled. Over-relaxation is only locally convergent, so drop it first;
    // a stall of the plain iteration (tiny entries in the optimal plan) is
    // handed to Newton on the same dual problem.
    if (omega != 1.0) {
      omega = 1.0;
    } else if (newton_ok) {
      for (int k = 0; k < 50 && it < options.max_iterations; ++k, ++it) {
        if (!st.newton_step()) break;
        err = st.marginal_error() / M;
        if (err < options.tolerance) break;
      }
      if (err < options.tolerance) break;
    }
    best = err;
    last_gain = it;
  }
  if (!(err < options.tolerance)) {
    std::ostringstream os;
    os << "sinkhorn: no convergence after " << options.max_iterations
       << " iterations, relative marginal error " << err;
    throw std::runtime_error(os.str());
  }
  auto entry = [&](std::size_t i, std::size_t j) {
    return (mu.weights[i] > 0.0 && nu.weights[j] > 0.0) ? st.entry(i, j) : 0.0;
  };

  // Rounding onto the transport polytope.
  std::vector<double> P(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) P[i * n + j] = entry(i, j);
  for (std::size_t i = 0; i < m; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) rs += P[i * n + j];
    const double scale = rs > 0.0 ? std::min(mu.weights[i] / rs, 1.0) : 0.0;
    for (std::size_t j = 0; j < n; ++j) P[i * n + j] *= scale;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double cs = 0.0;
    for (std::size_t i = 0; i < m; ++i) cs += P[i * n + j];
    const double scale = cs > 0.0 ? std::min(nu.weights[j] / cs, 1.0) : 0.0;
    for (std::size_t i = 0; i < m; ++i) P[i * n + j] *= scale;
  }
  std::vector<double> er(m), ec(n, 0.0);
  double er_norm = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) rs += P[i * n + j];
    er[i] = std::max(0.0, mu.weights[i] - rs);
    er_norm += er[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    double cs = 0.0;
    for (std::size_t i = 0; i < m; ++i) cs += P[i * n + j];
    ec[j] = std::max(0.0, nu.weights[j] - cs);
  }
  if (er_norm > 0.0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) P[i * n + j] += er[i] * ec[j] / er_norm;
  }

  TransportPlan plan;
  plan.rows = m;
  plan.cols = n;
  plan.iterations = it;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = P[i * n + j];
      if (w > 0.0) {
        plan.entries.push_back({i, j, w});
        plan.cost += w * cost(i, j);
      }
    }
  }
  return plan;
}

double w2_radial_quantile(const std::vector<double>& radii_a, const std::vector<double>& masses_a,
                          const std::vector<double>& radii_b, const std::vector<double>& masses_b) {
  if (radii_a.size() != masses_a.size() || radii_b.size() != masses_b.size()) {
    throw std::invalid_argument("w2_radial_quantile: radii and masses differ in size");
  }
  check_weights(masses_a);
  check_weights(masses_b);
  const double ma = std::accumulate(masses_a.begin(), masses_a.end(), 0.0);
  const double mb = std::accumulate(masses_b.begin(), masses_b.end(), 0.0);
  check_balance(ma, mb);

  auto sorted = [](const std::vector<double>& r) {
    std::vector<std::size_t> idx(r.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return r[x] < r[y]; });
    return idx;
  };
  const auto ia = sorted(radii_a), ib = sorted(radii_b);
  std::size_t p = 0, q = 0;
  double left_a = ia.empty() ? 0.0 : masses_a[ia[0]];
  double left_b = ib.empty() ? 0.0 : masses_b[ib[0]];
  double cost = 0.0;
  while (p < ia.size() && q < ib.size()) {
    const double chunk = std::min(left_a, left_b);
    const double d = radii_a[ia[p]] - radii_b[ib[q]];
    cost += chunk * d * d;
    left_a -= chunk;
    left_b -= chunk;
    if (left_a <= 0.0) {
      if (++p < ia.size()) left_a = masses_a[ia[p]];
    }
    if (left_b <= 0.0) {
      if (++q < ib.size()) left_b = masses_b[ib[q]];
    }
  }
  return std::sqrt(cost);
}

double w2_same_center_radial(const DensityField& a, const DensityField& b) {
  if (a.grid->size() != b.grid->size() || a.grid->r_max() != b.grid->r_max()) {
    throw std::invalid_argument("w2_same_center_radial: fields must share the grid");
  }
  std::vector<double> ma(a.values.size()), mb(b.values.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    ma[i] = a.values[i] * a.grid->volume(i);
    mb[i] = b.values[i] * b.grid->volume(i);
  }
  return w2_radial_quantile(a.grid->centers(), ma, b.grid->centers(), mb);
}

DualPotential hopf_lax(const DualPotential& phi, double s, const CostMatrix& distances) {
  if (!(s > 0.0)) throw std::invalid_argument("hopf_lax: s must be > 0");
  if (distances.cols() != phi.values.size()) {
    throw std::invalid_argument("hopf_lax: distance matrix columns must match phi");
  }
  DualPotential out;
  out.s = s;
  out.values.resize(distances.rows());
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < distances.cols(); ++j) {
      const double d = distances(i, j);
      best = std::min(best, phi.values[j] + d * d / (2.0 * s));
    }
    out.values[i] = best;
  }
  return out;
}

double kantorovich_lower_bound(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                               const std::vector<double>& phi, const CostMatrix& distances) {
  check_balance(mu0.mass(), mu1.mass());
  if (phi.size() != mu0.size() || distances.rows() != mu0.size() || distances.cols() != mu1.size()) {
    throw std::invalid_argument("kantorovich_lower_bound: shape mismatch");
  }
  double value = 0.0;
  for (std::size_t j = 0; j < mu1.size(); ++j) {
    double q = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mu0.size(); ++i) {
      const double d = distances(i, j);
      q = std::min(q, phi[i] + 0.5 * d * d);
    }
    value += mu1.weights[j] * q;
  }
  for (std::size_t i = 0; i < mu0.size(); ++i) value -= mu0.weights[i] * phi[i];
  return value;
}

namespace {

// Mean of g under the copy at y, with the angular rule of the given size.
double bisector_mean(const DensityField& rho, double delta, int radial_nodes, int angular_nodes) {
  const RadialGrid& grid = *rho.grid;
  const ModelManifold& M = grid.manifold();
  const int n = M.dimension();
  const double K = M.curvature();
  const double sk = std::sqrt(K);
  const QuadratureRule ang = gauss_legendre(angular_nodes, 0.0, std::numbers::pi);
  std::vector<double> cos_a(ang.nodes.size()), w_a(ang.nodes.size());
  const double s_n2 = unit_sphere_area(n - 1);
  for (std::size_t k = 0; k < ang.nodes.size(); ++k) {
    cos_a[k] = std::cos(ang.nodes[k]);
    w_a[k] = ang.weights[k] * s_n2 * std::pow(std::sin(ang.nodes[k]), n - 2);
  }
  const double sh_d = std::sinh(sk * delta), ch_d = std::cosh(sk * delta);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (rho.values[i] == 0.0) continue;
    const QuadratureRule rad = gauss_legendre(radial_nodes, grid.face(i), grid.face(i + 1));
    double cell_num = 0.0, cell_den = 0.0;
    for (std::size_t q = 0; q < rad.nodes.size(); ++q) {
      const double r = rad.nodes[q];
      const double vol = rad.weights[q] * std::pow(M.warping(r), n - 1);
      double inner = 0.0, weight = 0.0;
      if (K == 0.0) {
        for (std::size_t k = 0; k < cos_a.size(); ++k) {
          inner += w_a[k] * (delta + r * cos_a[k]);
          weight += w_a[k];
        }
      } else {
        // sinh(sqrt(K) g) = sinh(sqrt(K) delta) cosh(sqrt(K) r) + cosh(sqrt(K) delta) sinh(sqrt(K) r) cos(alpha)
        const double a0 = sh_d * std::cosh(sk * r), a1 = ch_d * std::sinh(sk * r);
        for (std::size_t k = 0; k < cos_a.size(); ++k) {
          inner += w_a[k] * std::asinh(a0 + a1 * cos_a[k]) / sk;
          weight += w_a[k];
        }
      }
      cell_num += vol * inner;
      cell_den += vol * weight;
    }
    num += rho.values[i] * cell_num;
    den += rho.values[i] * cell_den;
  }
  if (!(den > 0.0)) throw std::invalid_argument("w1_bisector_lower_bound: density has no mass");
  return num / den;
}

}  // namespace

double w1_bisector_lower_bound(const DensityField& rho, double delta, const BisectorQuadrature& quad) {
  if (!(delta > 0.0)) throw std::invalid_argument("w1_bisector_lower_bound: delta must be > 0");
  if (quad.radial_nodes < 1 || quad.angular_nodes < 2) {
    throw std::invalid_argument("w1_bisector_lower_bound: bad quadrature spec");
  }
  const double fine = bisector_mean(rho, delta, quad.radial_nodes, quad.angular_nodes);
  const double coarse = bisector_mean(rho, delta, quad.radial_nodes, quad.angular_nodes / 2);
  if (std::abs(fine - coarse) > quad.tolerance * delta) {
    std::ostringstream os;
    os << "w1_bisector_lower_bound: quadrature error estimate " << std::abs(fine - coarse)
       << " exceeds " << quad.tolerance << " * delta";
    throw std::runtime_error(os.str());
  }
  return fine;
}

double w1_bisector_lower_bound(const DensityField& rho, const HyperboloidPoint& x,
                               const HyperboloidPoint& y, const BisectorQuadrature& quad) {
  const ModelManifold& M = rho.grid->manifold();
  if (M.curvature() != x.curvature() || M.dimension() != x.dimension()) {
    throw std::invalid_argument("w1_bisector_lower_bound: points and grid belong to different spaces");
  }
  return w1_bisector_lower_bound(rho, geodesic_distance(x, y), quad);
}

CostMatrix squared_distance_matrix(const std::vector<HyperboloidPoint>& a,
                                   const std::vector<HyperboloidPoint>& b) {
  CostMatrix c(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = geodesic_distance(a[i], b[j]);
      c(i, j) = d * d;
    }
  }
  return c;
}

CostMatrix squared_distance_matrix(const std::vector<std::vector<double>>& a,
                                   const std::vector<std::vector<double>>& b) {
  CostMatrix c(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (a[i].size() != b[j].size()) throw std::invalid_argument("point dimensions differ");
      double s = 0.0;
      for (std::size_t k = 0; k < a[i].size(); ++k) {
        const double d = a[i][k] - b[j][k];
        s += d * d;
      }
      c(i, j) = s;
    }
  }
  return c;
}

void write_plan_csv(const TransportPlan& plan, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "i,j,weight\n";
  char buf[96];
  for (const auto& e : plan.entries) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", e.i, e.j, e.weight);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void write_measure_csv(const DiscreteMeasure& measure, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::size_t dim = measure.points.empty() ? 0 : measure.points.front().size();
  for (std::size_t k = 0; k < dim; ++k) os << 'x' << k << ',';
  os << "weight\n";
  char buf[64];
  for (std::size_t i = 0; i < measure.size(); ++i) {
    if (dim > 0) {
      for (double c : measure.points[i]) {
        std::snprintf(buf, sizeof buf, "%.17g,", c);
        os << buf;
      }
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", measure.weights[i]);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace pmelab
