#include "pmelab/lab.hpp"

#include "pmelab/hamiltonian.hpp"
#include "pmelab/quadrature.hpp"
#include "pmelab/worker_pool.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace pmelab {

namespace {

using nlohmann::json;

double smoothing_exponent(int n, double m) { return n / (2.0 + n * (m - 1.0)); }
double mass_exponent(int n, double m) { return 2.0 / (2.0 + n * (m - 1.0)); }

std::string tag(const std::string& prefix, double v) { return prefix + format_number(v); }

std::vector<double> log_times(double t_start, double T, int count) {
  if (count <= 0) return {};
  if (count == 1) return {T};
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i) t[i] = t_start * std::pow(T / t_start, static_cast<double>(i) / (count - 1));
  t.back() = T;
  return t;
}

SolverConfig solver_config(const ExperimentConfig& cfg, std::vector<double> checkpoints, bool every_step) {
  SolverConfig s;
  s.dt_initial = cfg.solver.dt_initial;
  s.dt_max = cfg.solver.dt_max;
  s.newton_tol = cfg.solver.newton_tol;
  s.newton_max_iters = cfg.solver.newton_max_iters;
  s.checkpoints = std::move(checkpoints);
  s.record_every_step = every_step;
  return s;
}

RegularizedNonlinearity regularized(const ExperimentConfig& cfg, const PorousNonlinearity& P, double sup) {
  return regularize(P, cfg.nonlinearity.eps_ratio / (2.0 * sup));
}

double max_mass_drift(const Trajectory& tr) {
  const double m0 = mass(tr.states.front());
  double drift = 0.0;
  for (const auto& s : tr.states) drift = std::max(drift, std::abs(mass(s) - m0) / m0);
  return drift;
}

json solver_record(const std::string& label, const Trajectory& tr) {
  return {{"kind", "solver"},
          {"run", label},
          {"mass_drift", max_mass_drift(tr)},
          {"steps", tr.stats.steps},
          {"rejected", tr.stats.rejected},
          {"newton_iterations", tr.stats.newton_iterations},
          {"max_newton_iterations", tr.stats.max_newton_iterations},
          {"min_dt", tr.stats.min_dt},
          {"max_dt", tr.stats.max_dt}};
}

std::string flag(bool b) { return b ? "1" : "0"; }

// States at the requested times (t = 0 excluded), in order.
std::vector<std::size_t> indices_at(const Trajectory& tr, const std::vector<double>& times) {
  std::vector<std::size_t> idx;
  for (double t : times) {
    auto it = std::find_if(tr.states.begin(), tr.states.end(),
                           [t](const DensityField& s) { return std::abs(s.t - t) <= 1e-12 * t; });
    if (it == tr.states.end()) throw std::logic_error("missing checkpoint state");
    idx.push_back(static_cast<std::size_t>(it - tr.states.begin()));
  }
  return idx;
}

double clamp_fit(double raw) { return std::max(1.0, raw); }

}  // namespace

double stability_factor(double K, double c1, double m, int n, double M, double t, double C_fit,
                        bool cartan_hadamard) {
  if (!(K >= 0.0) || !(c1 > 0.0) || !(m >= 1.0) || n < 1 || !(M > 0.0) || !(t >= 0.0) || !(C_fit > 0.0)) {
    throw std::invalid_argument("stability_factor: parameters out of range");
  }
  const double cm = frak_c_m(C_fit, m, n);
  const double s = t * std::pow(M, m - 1.0);
  const double power = std::pow(s, 2.0 / (2.0 + n * (m - 1.0)));
  const double growth = cartan_hadamard ? power : std::max(power, s);
  return std::exp(K * c1 * cm * growth);
}

PorousNonlinearity make_nonlinearity(const NonlinearityParams& p) {
  if (p.flavor == "pure_power") return PorousNonlinearity::pure_power(p.m, p.coefficient);
  if (p.flavor == "polynomial") return PorousNonlinearity::polynomial(p.terms, p.m, p.c0, p.c1);
  throw ConfigError("unknown nonlinearity flavor '" + p.flavor + "'");
}

double smoothing_ratio(const Trajectory& traj, double m, int n, double M) {
  const double a = smoothing_exponent(n, m), b = mass_exponent(n, m);
  double best = 0.0;
  for (const auto& s : traj.states) {
    if (s.t <= 0.0) continue;
    best = std::max(best, sup_norm(s) / (std::pow(s.t, -a) * std::pow(M, b) + M));
  }
  return best;
}

DiscreteMeasure meridian_cloud(const DensityField& rho, double offset, double r_extent, int radial_bins,
                               int angular_nodes) {
  const RadialGrid& g = *rho.grid;
  const int n = g.manifold().dimension();
  const double K = g.manifold().curvature();
  if (radial_bins < 1 || angular_nodes < 1 || !(r_extent > 0.0)) {
    throw std::invalid_argument("meridian_cloud: bad resolution");
  }

  std::vector<double> bin_mass(radial_bins, 0.0), bin_moment(radial_bins, 0.0);
  const double width = r_extent / radial_bins;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = rho.values[i] * g.volume(i);
    if (w == 0.0) continue;
    const int b = std::min(radial_bins - 1, static_cast<int>(g.center(i) / width));
    bin_mass[b] += w;
    bin_moment[b] += w * g.center(i);
  }

  // sector weights of sin^{n-2} on [0, pi]
  std::vector<double> sector(angular_nodes), angle(angular_nodes);
  double total = 0.0;
  for (int j = 0; j < angular_nodes; ++j) {
    const double a = M_PI * j / angular_nodes, b = M_PI * (j + 1) / angular_nodes;
    const auto q = gauss_legendre(8, a, b);
    double s = 0.0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) s += q.weights[k] * std::pow(std::sin(q.nodes[k]), n - 2);
    sector[j] = s;
    angle[j] = 0.5 * (a + b);
    total += s;
  }
  for (double& s : sector) s /= total;

  std::vector<std::vector<double>> points;
  std::vector<double> weights;
  if (K > 0.0) {
    const auto origin = HyperboloidPoint::origin(2, K);
    const std::vector<double> e1{1.0, 0.0, 0.0}, e2{0.0, 1.0, 0.0};
    const auto center = exp_map(origin, e1, offset);
    const auto f1 = parallel_transport(origin, e1, offset, e1);
    const auto f2 = parallel_transport(origin, e1, offset, e2);
    for (int b = 0; b < radial_bins; ++b) {
      if (bin_mass[b] == 0.0) continue;
      const double r = bin_moment[b] / bin_mass[b];
      for (int j = 0; j < angular_nodes; ++j) {
        std::vector<double> dir(3);
        for (int k = 0; k < 3; ++k) dir[k] = std::cos(angle[j]) * f1[k] + std::sin(angle[j]) * f2[k];
        const auto p = exp_map(center, unit_tangent(center, dir), r);
        points.emplace_back(p.coords().begin(), p.coords().end());
        weights.push_back(bin_mass[b] * sector[j]);
      }
    }
  } else {
    for (int b = 0; b < radial_bins; ++b) {
      if (bin_mass[b] == 0.0) continue;
      const double r = bin_moment[b] / bin_mass[b];
      for (int j = 0; j < angular_nodes; ++j) {
        points.push_back({offset + r * std::cos(angle[j]), r * std::sin(angle[j])});
        weights.push_back(bin_mass[b] * sector[j]);
      }
    }
  }
  return DiscreteMeasure(std::move(points), std::move(weights));
}

CostMatrix meridian_cost(const DiscreteMeasure& a, const DiscreteMeasure& b, double K) {
  if (K > 0.0) {
    std::vector<HyperboloidPoint> pa, pb;
    for (const auto& p : a.points) pa.emplace_back(p, K);
    for (const auto& p : b.points) pb.emplace_back(p, K);
    return squared_distance_matrix(pa, pb);
  }
  return squared_distance_matrix(a.points, b.points);
}

W2Interval w2_interval(const DensityField& rho, const DensityField& rho_hat, double delta, const OtParams& ot) {
  if (rho.grid != rho_hat.grid) throw std::invalid_argument("w2_interval: densities must share a grid");
  const double ma = mass(rho), mb = mass(rho_hat);
  if (std::abs(ma - mb) > 1e-10 * std::max(ma, mb)) {
    throw MassMismatch("w2_interval: masses differ, W2 is infinite");
  }
  const RadialGrid& g = *rho.grid;

  // radius beyond which both densities carry no mass
  double extent = g.dr();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (rho.values[i] > 0.0 || rho_hat.values[i] > 0.0) extent = g.face(i + 1);
  }

  DiscreteMeasure a = meridian_cloud(rho, 0.0, extent, ot.radial_bins, ot.angular_nodes);
  DiscreteMeasure b = meridian_cloud(rho_hat, delta, extent, ot.radial_bins, ot.angular_nodes);
  const double scale = a.mass() / b.mass();
  for (double& w : b.weights) w *= scale;
  const CostMatrix cost = meridian_cost(a, b, g.manifold().curvature());

  TransportPlan plan;
  if (ot.engine == "sinkhorn") {
    std::vector<double> c = cost.data();
    std::nth_element(c.begin(), c.begin() + c.size() / 2, c.end());
    const double median = c[c.size() / 2];
    SinkhornOptions opt;
    opt.tolerance = ot.sinkhorn_tolerance;
    plan = sinkhorn(a, b, cost, ot.ent_reg * (median > 0.0 ? median : 1.0), opt);
  } else {
    plan = exact_ot(a, b, cost);
  }

  W2Interval out;
  out.upper = std::sqrt(std::max(0.0, plan.cost));
  if (delta > 0.0) {
    BisectorQuadrature quad;
    quad.radial_nodes = ot.bisector_radial_nodes;
    quad.angular_nodes = ot.bisector_angular_nodes;
    out.lower = std::sqrt(mb) * w1_bisector_lower_bound(rho_hat, delta, quad);
  }
  return out;
}

Report run_smoothing_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.config = cfg;
  const int n = cfg.manifold.n;
  const auto P = make_nonlinearity(cfg.nonlinearity);
  const double m = P.m();
  const double alpha = smoothing_exponent(n, m), beta = mass_exponent(n, m);
  const auto window = log_times(cfg.time.t_start, cfg.time.T, std::max(2, cfg.time.checkpoints));

  struct Job {
    double K, M;
    bool scan;  // time window run; otherwise a mass-sweep run up to mass_time
    Trajectory traj;
  };
  std::vector<Job> jobs;
  for (double K : cfg.smoothing.curvatures) {
    jobs.push_back({K, cfg.datum.M, true, {}});
    for (double M : cfg.smoothing.masses) jobs.push_back({K, M, false, {}});
  }
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    Job& job = jobs[i];
    auto grid = make_grid(n, job.K, cfg.grid.R_max, cfg.grid.N);
    const auto rho0 = near_dirac_datum(grid, job.M, cfg.datum.width);
    const auto Pe = regularized(cfg, P, sup_norm(rho0));
    if (job.scan) {
      job.traj = evolve(rho0, Pe, cfg.time.T, solver_config(cfg, window, false));
    } else {
      job.traj = evolve(rho0, Pe, cfg.smoothing.mass_time, solver_config(cfg, {}, false));
    }
  });

  CsvTable table{"smoothing.csv", {"K", "M", "t", "sup"}, {}};
  double C_raw = 0.0, worst_drift = 0.0;
  for (double K : cfg.smoothing.curvatures) {
    std::vector<double> lt, ls, lm, lsm;
    for (const auto& job : jobs) {
      if (job.K != K) continue;
      const std::string label = tag("K", K) + "_" + tag("M", job.M) + (job.scan ? "" : "_sweep");
      C_raw = std::max(C_raw, smoothing_ratio(job.traj, m, n, job.M));
      worst_drift = std::max(worst_drift, max_mass_drift(job.traj));
      rep.records.push_back(solver_record(label, job.traj));
      if (job.scan) {
        for (const auto& s : job.traj.states) {
          if (s.t < cfg.time.t_start * (1.0 - 1e-12)) continue;
          const double sup = sup_norm(s);
          lt.push_back(std::log(s.t));
          ls.push_back(std::log(sup));
          rep.records.push_back({{"kind", "sup"},
                                 {"K", K},
                                 {"M", job.M},
                                 {"t", s.t},
                                 {"sup", sup},
                                 {"envelope", std::pow(s.t, -alpha) * std::pow(job.M, beta) + job.M}});
          table.rows.push_back({format_number(K), format_number(job.M), format_number(s.t), format_number(sup)});
        }
        rep.checkpoints.push_back({label, job.traj.states});
      } else {
        const auto& s = job.traj.states.back();
        lm.push_back(std::log(job.M));
        lsm.push_back(std::log(sup_norm(s)));
        rep.records.push_back({{"kind", "mass_scaling"}, {"K", K}, {"M", job.M}, {"t", s.t}, {"sup", sup_norm(s)}});
        table.rows.push_back(
            {format_number(K), format_number(job.M), format_number(s.t), format_number(sup_norm(s))});
        rep.checkpoints.push_back({label, {s}});
      }
    }

    Fit slope = fit_line("sup_" + tag("K", K), lt, ls);
    slope.extra = {{"target", -alpha}, {"tolerance", cfg.smoothing.tolerance}};
    rep.verdicts.push_back(make_verdict("time_exponent_" + tag("K", K),
                                        std::abs(slope.slope + alpha) <= cfg.smoothing.tolerance, slope.slope,
                                        -alpha, "log sup rho vs log t on [t_start, T]"));
    rep.fits.push_back(std::move(slope));

    if (lm.size() >= 2) {
      Fit ms = fit_line("mass_" + tag("K", K), lm, lsm);
      ms.extra = {{"target", beta}, {"tolerance", cfg.smoothing.tolerance}, {"t", cfg.smoothing.mass_time}};
      rep.verdicts.push_back(make_verdict("mass_exponent_" + tag("K", K),
                                          std::abs(ms.slope - beta) <= cfg.smoothing.tolerance, ms.slope, beta,
                                          "log sup rho vs log M at fixed t"));
      rep.fits.push_back(std::move(ms));
    }
  }
  rep.tables.push_back(std::move(table));
  rep.scalars["smoothing_constant"] = {{"raw", C_raw}, {"C_fit", clamp_fit(C_raw)}};
  rep.verdicts.push_back(make_verdict("mass_conservation", worst_drift < 1e-10, worst_drift, 1e-10));
  return rep;
}

Report run_stability_check(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.config = cfg;
  const auto& sc = cfg.stability;
  if (std::abs(cfg.datum.M - cfg.datum.M_hat) > 1e-10 * std::max(cfg.datum.M, cfg.datum.M_hat)) {
    throw MassMismatch("stability: the two data must have equal mass (M = " + format_number(cfg.datum.M) +
                       ", M_hat = " + format_number(cfg.datum.M_hat) + ")");
  }
  const auto P = make_nonlinearity(cfg.nonlinearity);
  const double m = P.m(), M = cfg.datum.M, K = cfg.manifold.K;
  const auto times = log_times(cfg.time.t_start, cfg.time.T, cfg.time.checkpoints);

  for (int n : sc.dimensions) {
    const std::string nt = "n" + std::to_string(n);
    auto grid = make_grid(n, K, cfg.grid.R_max, cfg.grid.N);
    const auto a0 = near_dirac_datum(grid, M, cfg.datum.width);
    const auto b0 = near_dirac_datum(grid, cfg.datum.M_hat, cfg.datum.width_hat);
    const auto Pe = regularized(cfg, P, std::max(sup_norm(a0), sup_norm(b0)));
    const auto trajs = evolve_many({a0, b0}, Pe, cfg.time.T, solver_config(cfg, times, false));
    const auto& ta = trajs[0];
    const auto& tb = trajs[1];
    rep.records.push_back(solver_record(nt + "_rho", ta));
    rep.records.push_back(solver_record(nt + "_rho_hat", tb));

    const double C_raw = std::max(smoothing_ratio(ta, m, n, M), smoothing_ratio(tb, m, n, M));
    const double C = sc.C_fit > 0.0 ? sc.C_fit : clamp_fit(C_raw);
    rep.scalars["C_" + nt] = {{"self_fit_raw", C_raw},
                              {"C_fit", C},
                              {"source", sc.C_fit > 0.0 ? "config" : "self"},
                              {"C_m", frak_c_m(C, m, n)}};

    const std::size_t count = ta.states.size();
    std::vector<W2Interval> w(count);
    parallel_for(count, cfg.threads,
                 [&](std::size_t k) { w[k] = w2_interval(ta.states[k], tb.states[k], sc.delta, cfg.ot); });

    const double w0 = w[0].upper;
    const double K_ric = (n - 1) * K;
    CsvTable table{"stability_" + nt + ".csv", {"t", "w2_lower", "w2_upper", "bound", "verdict"}, {}};
    bool all_ok = true, consistent = true;
    double worst = 0.0, worst_gap = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double t = ta.states[k].t;
      const double f_default = stability_factor(K_ric, P.c1(), m, n, M, t, C, false);
      const double f_ch = stability_factor(K_ric, P.c1(), m, n, M, t, C, true);
      const double factor = cfg.cartan_hadamard ? f_ch : f_default;
      const double bound = factor * w0 * (1.0 + sc.slack);
      const bool ok = w[k].upper <= bound;
      all_ok = all_ok && ok;
      if (bound > 0.0) worst = std::max(worst, w[k].upper / bound);
      if (w[k].upper > 0.0) worst_gap = std::max(worst_gap, w[k].lower / w[k].upper - 1.0);
      consistent = consistent && w[k].lower <= w[k].upper * (1.0 + 1e-6);
      rep.records.push_back({{"kind", "stability"},
                             {"n", n},
                             {"t", t},
                             {"w2_lower", w[k].lower},
                             {"w2_upper", w[k].upper},
                             {"w2_initial", w0},
                             {"factor", f_default},
                             {"factor_cartan_hadamard", f_ch},
                             {"bound", bound},
                             {"verdict", ok}});
      table.rows.push_back(
          {format_number(t), format_number(w[k].lower), format_number(w[k].upper), format_number(bound), flag(ok)});
    }
    rep.tables.push_back(std::move(table));
    rep.verdicts.push_back(make_verdict("stability_" + nt, all_ok, worst, 1.0,
                                        "max over checkpoints of w2_upper / (factor w2_initial (1 + slack))"));
    rep.verdicts.push_back(make_verdict("interval_" + nt, consistent, worst_gap, 1e-6,
                                        "bisector lower bound must not exceed the transport upper bound"));
    rep.checkpoints.push_back({nt + "_rho", ta.states});
    rep.checkpoints.push_back({nt + "_rho_hat", tb.states});

    if (sc.control) {
      const std::string ct = "control_" + nt;
      auto flat = make_grid(n, 0.0, cfg.grid.R_max, cfg.grid.N);
      const auto c0 = near_dirac_datum(flat, M, sc.control_width);
      const auto c1 = near_dirac_datum(flat, M, sc.control_width_hat);
      const auto Pc = regularized(cfg, P, std::max(sup_norm(c0), sup_norm(c1)));
      const auto ctr = evolve_many({c0, c1}, Pc, cfg.time.T, solver_config(cfg, times, false));
      rep.records.push_back(solver_record(ct, ctr[0]));
      CsvTable ctab{ct + ".csv", {"t", "w2", "verdict"}, {}};
      double prev = INFINITY, worst_rise = 0.0;
      bool mono = true;
      for (std::size_t k = 0; k < ctr[0].states.size(); ++k) {
        const double t = ctr[0].states[k].t;
        const double v = w2_same_center_radial(ctr[0].states[k], ctr[1].states[k]);
        const bool ok = v <= prev * (1.0 + sc.control_slack);
        if (k > 0) worst_rise = std::max(worst_rise, v / prev - 1.0);
        mono = mono && ok;
        prev = v;
        rep.records.push_back({{"kind", "control"}, {"n", n}, {"t", t}, {"w2", v}, {"verdict", ok}});
        ctab.rows.push_back({format_number(t), format_number(v), flag(ok)});
      }
      rep.tables.push_back(std::move(ctab));
      rep.verdicts.push_back(make_verdict(ct, mono, worst_rise, sc.control_slack,
                                          "Euclidean co-centered nested data: W2 nonincreasing"));
      rep.checkpoints.push_back({ct + "_rho", ctr[0].states});
      rep.checkpoints.push_back({ct + "_rho_hat", ctr[1].states});
    }
  }
  return rep;
}

Report run_optimality_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.config = cfg;
  const auto& oc = cfg.optimality;
  const int n = cfg.manifold.n;
  const auto P = make_nonlinearity(cfg.nonlinearity);
  const double m = P.m(), M = cfg.datum.M, delta = oc.delta;
  const double alpha = smoothing_exponent(n, m), gamma = mass_exponent(n, m);
  const double time_scale = std::pow(M, m - 1.0);  // solve with unit mass at t M^{m-1}
  const auto times = log_times(cfg.time.t_start, cfg.time.T, std::max(2, cfg.time.checkpoints));
  std::vector<double> taus;
  for (double t : times) taus.push_back(t * time_scale);

  std::vector<double> curvatures = oc.curvatures;
  if (cfg.manifold.K > 0.0) curvatures.push_back(cfg.manifold.K);
  std::sort(curvatures.begin(), curvatures.end());
  curvatures.erase(std::unique(curvatures.begin(), curvatures.end()), curvatures.end());
  if (curvatures.empty()) throw ConfigError("optimality: need K > 0");

  const bool withheld = delta > oc.delta_threshold;
  if (withheld) {
    rep.records.push_back({{"kind", "warning"},
                           {"message", "delta exceeds delta_threshold; verdicts withheld"},
                           {"delta", delta},
                           {"delta_threshold", oc.delta_threshold}});
  }

  BisectorQuadrature quad;
  quad.radial_nodes = cfg.ot.bisector_radial_nodes;
  quad.angular_nodes = cfg.ot.bisector_angular_nodes;
  const Barenblatt bar(n, m, 1.0);
  const double bar_sup = std::pow(bar.D, 1.0 / (m - 1.0));
  const double bar_inner = std::pow(0.75 * bar.D, 1.0 / (m - 1.0));

  struct Run {
    double K;
    Trajectory traj;
    std::vector<double> excess;
  };
  std::vector<Run> runs;
  for (double K : curvatures) runs.push_back({K, {}, {}});
  parallel_for(runs.size(), cfg.threads, [&](std::size_t i) {
    Run& run = runs[i];
    auto grid = make_grid(n, run.K, cfg.grid.R_max, cfg.grid.N);
    const auto rho0 = near_dirac_datum(grid, 1.0, cfg.datum.width);
    const auto Pe = regularized(cfg, P, sup_norm(rho0));
    run.traj = evolve(rho0, Pe, taus.back(), solver_config(cfg, taus, false));
    for (std::size_t k : indices_at(run.traj, taus)) {
      run.excess.push_back(w1_bisector_lower_bound(run.traj.states[k], delta, quad) / delta - 1.0);
    }
  });

  auto verdict = [&](std::string name, bool pass, double value, double threshold, std::string detail) {
    Verdict v = make_verdict(std::move(name), pass, value, threshold, std::move(detail));
    if (withheld) {
      v.status = VerdictStatus::Withheld;
      v.detail += " (withheld: delta above threshold)";
    }
    rep.verdicts.push_back(std::move(v));
  };

  CsvTable table{"optimality.csv", {"K", "t", "lower_bound", "excess", "sup", "support"}, {}};
  for (const auto& run : runs) {
    const std::string kt = tag("K", run.K);
    rep.records.push_back(solver_record(kt, run.traj));
    const auto idx = indices_at(run.traj, taus);
    std::vector<double> lt, le;
    double kappa = INFINITY, D1 = INFINITY, worst_sup = 0.0, worst_support = 0.0;
    bool positive = true;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = run.traj.states[idx[j]];
      const double t = times[j], tau = taus[j], e = run.excess[j];
      const double lb = std::sqrt(M) * delta * (1.0 + e);
      positive = positive && e > 0.0;
      kappa = std::min(kappa, e / (run.K * std::pow(tau, gamma)));
      if (e > 0.0) {
        lt.push_back(std::log(t));
        le.push_back(std::log(e));
      }

      // Euclidean Barenblatt sandwich at unit mass
      const double front = bar.front(tau);
      const double sup = sup_norm(s);
      const double supp = support_radius(s, 1e-12 * sup);
      double inner_min = INFINITY;
      for (std::size_t i = 0; i < s.values.size() && s.grid->center(i) <= 0.5 * front; ++i) {
        inner_min = std::min(inner_min, s.values[i]);
      }
      const double ta = std::pow(tau, alpha);
      worst_sup = std::max(worst_sup, sup * ta / bar_sup);
      worst_support = std::max(worst_support, supp / front);
      D1 = std::min(D1, inner_min * ta);
      rep.records.push_back({{"kind", "optimality"},
                             {"K", run.K},
                             {"t", t},
                             {"tau", tau},
                             {"lower_bound", lb},
                             {"excess", e},
                             {"sup", sup},
                             {"barenblatt_sup", bar_sup / ta},
                             {"support", supp},
                             {"barenblatt_front", front},
                             {"inner_min", inner_min}});
      table.rows.push_back({format_number(run.K), format_number(t), format_number(lb), format_number(e),
                            format_number(sup), format_number(supp)});
    }
    rep.scalars["kappa_" + kt] = kappa;
    rep.scalars["sandwich_" + kt] = {{"sup_ratio", worst_sup},
                                     {"support_ratio", worst_support},
                                     {"D1", D1},
                                     {"barenblatt_inner", bar_inner}};
    if (lt.size() >= 2) {
      Fit f = fit_line("excess_" + kt, lt, le);
      f.extra = {{"target", gamma}, {"tolerance", oc.slope_tolerance}, {"K", run.K}};
      if (run.K == cfg.manifold.K) {
        verdict("excess_exponent_" + kt, std::abs(f.slope - gamma) <= oc.slope_tolerance, f.slope, gamma,
                "log(LB / (sqrt(M) delta) - 1) vs log t");
      }
      rep.fits.push_back(std::move(f));
    } else if (run.K == cfg.manifold.K) {
      verdict("excess_exponent_" + kt, false, NAN, gamma, "excess not positive at two checkpoints");
    }
    if (run.K == cfg.manifold.K) {
      verdict("kappa_positive_" + kt, positive && kappa > 0.0, kappa, 0.0,
              "min over checkpoints of excess / (K (t M^{m-1})^{2/(2+n(m-1))})");
    }
    verdict("sandwich_upper_" + kt,
            worst_sup <= 1.0 + oc.sandwich_slack && worst_support <= 1.0 + oc.sandwich_slack,
            std::max(worst_sup, worst_support), 1.0 + oc.sandwich_slack,
            "sup below the Barenblatt peak and support inside A(t)");
    verdict("sandwich_lower_" + kt, D1 > 0.0, D1, 0.0, "t^{n/(2+n(m-1))} min of rho on [0, A(t)/2]");
  }

  if (runs.size() >= 2) {
    double spread = 0.0;
    for (std::size_t j = 0; j < taus.size(); ++j) {
      double lo = INFINITY, hi = 0.0;
      for (const auto& run : runs) {
        const double q = run.excess[j] / run.K;
        lo = std::min(lo, q);
        hi = std::max(hi, q);
      }
      spread = std::max(spread, lo > 0.0 ? hi / lo - 1.0 : INFINITY);
      rep.records.push_back({{"kind", "k_sweep"}, {"t", times[j]}, {"min_excess_over_K", lo}, {"max_excess_over_K", hi}});
    }
    verdict("excess_proportional_to_K", spread <= oc.proportionality_tolerance, spread,
            oc.proportionality_tolerance, "max over t of the relative spread of excess / K across the sweep");
  }
  rep.tables.push_back(std::move(table));
  for (const auto& run : runs) rep.checkpoints.push_back({tag("K", run.K), run.traj.states});
  return rep;
}

Report run_compact_support_check(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.config = cfg;
  const auto& cs = cfg.compact_support;
  const int n = cfg.manifold.n;
  const double K = cfg.manifold.K;
  const double inner = cs.R_D - cs.collar;
  if (cs.datum_radius > inner * (1.0 + 1e-12)) {
    throw ConfigError("compact_support: datum radius " + format_number(cs.datum_radius) +
                      " overlaps the collar [" + format_number(inner) + ", " + format_number(cs.R_D) + "]");
  }
  if (cs.R_D >= cfg.grid.R_max) throw ConfigError("compact_support: R_D must be below grid.R_max");

  const auto P = make_nonlinearity(cfg.nonlinearity);
  auto grid = make_grid(n, K, cfg.grid.R_max, cfg.grid.N);
  const auto rho0 = DensityField::from_function(
      grid, [&](double r) { return r <= cs.datum_radius ? cs.datum_height : 0.0; });
  const double sup0 = sup_norm(rho0);
  if (!(sup0 > 0.0)) throw ConfigError("compact_support: datum radius is below one cell");
  const double sigma = grid->manifold().radial_laplacian_coefficient(inner);
  const auto tw = choose_supersolution_constants(sup0, cs.collar, sigma, P);

  std::vector<double> times;
  for (int k = 1; k <= cs.checkpoints; ++k) times.push_back(tw.t1 * k / cs.checkpoints);
  times.back() = tw.t1;
  const auto Pe = regularized(cfg, P, sup0);
  const auto traj = evolve(rho0, Pe, tw.t1, solver_config(cfg, times, false));
  rep.records.push_back(solver_record("rho", traj));
  rep.scalars["supersolution"] = {{"C1", tw.C1}, {"C2", tw.C2}, {"t1", tw.t1}, {"sigma", sigma},
                                  {"eps_collar", tw.eps_collar}, {"regularization", Pe.eps()}};

  CsvTable table{"compact_support.csv", {"t", "support", "front", "margin"}, {}};
  double min_margin = INFINITY, worst_excess = -INFINITY;
  for (const auto& s : traj.states) {
    const double t = std::min(s.t, tw.t1);
    const double supp = support_radius(s, cs.threshold);
    const double front = traveling_wave_front(tw, cs.R_D, t);
    const double margin = front - supp;
    min_margin = std::min(min_margin, margin);
    double excess = -INFINITY;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double r = grid->center(i);
      if (r < inner) continue;
      const double barrier = r <= cs.R_D ? traveling_wave_value(tw, cs.R_D - r, t) : 0.0;
      excess = std::max(excess, s.values[i] - barrier);
    }
    worst_excess = std::max(worst_excess, excess);
    rep.records.push_back({{"kind", "support"},
                           {"t", s.t},
                           {"support", supp},
                           {"front", front},
                           {"margin", margin},
                           {"barrier_excess", excess}});
    table.rows.push_back({format_number(s.t), format_number(supp), format_number(front), format_number(margin)});
  }
  rep.tables.push_back(std::move(table));
  rep.verdicts.push_back(make_verdict("support_inside_barrier", min_margin > 0.0, min_margin, 0.0,
                                      "min over checkpoints t <= t1 of barrier front - support radius"));
  rep.verdicts.push_back(make_verdict("below_barrier_on_collar", worst_excess <= 1e-9 * sup0, worst_excess,
                                      1e-9 * sup0, "max over the collar of rho - barrier"));
  rep.checkpoints.push_back({"rho", traj.states});
  return rep;
}

namespace {

struct TestFunction {
  std::string name;
  std::function<double(double)> f;
};

std::vector<TestFunction> be_family(double K) {
  const double s = std::sqrt(std::max(K, 1.0));
  return {
      {"r", [](double r) { return r; }},
      {"r^2/2", [](double r) { return 0.5 * r * r; }},
      {"r^3", [](double r) { return r * r * r; }},
      {"sin(r)", [](double r) { return std::sin(r); }},
      {"cos(2r)", [](double r) { return std::cos(2.0 * r); }},
      {"exp(-r^2)", [](double r) { return std::exp(-r * r); }},
      {"log(1+r)", [](double r) { return std::log(1.0 + r); }},
      {"r^4-r", [](double r) { return r * r * r * r - r; }},
      {"cosh(sr)", [s](double r) { return std::cosh(s * r); }},
      {"1/(1+r^2)", [](double r) { return 1.0 / (1.0 + r * r); }},
  };
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Report run_be_check(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.config = cfg;
  const auto& bc = cfg.be_check;

  struct Job {
    int n;
    double K;
    std::size_t f;
    std::vector<double> defect, roundoff, c, dr;
  };
  std::vector<Job> jobs;
  for (int n : bc.dimensions)
    for (double K : bc.curvatures)
      for (std::size_t f = 0; f < be_family(K).size(); ++f) jobs.push_back({n, K, f, {}, {}, {}, {}});

  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    Job& job = jobs[i];
    const auto fam = be_family(job.K);
    const double lambda = -(job.n - 1) * job.K;
    for (std::size_t N : bc.cells) {
      auto g = make_grid(job.n, job.K, bc.R_max, N);
      const auto f = PotentialField::from_function(g, fam[job.f].f);
      const double d = be_defect(f, lambda, job.n);
      const double ro = gamma2_roundoff(f);
      job.defect.push_back(d);
      job.roundoff.push_back(ro);
      job.dr.push_back(g->dr());
      job.c.push_back(std::max(0.0, -d - ro) / g->dr());
    }
  });

  CsvTable table{"be_check.csv", {"n", "K", "function", "N", "dr", "defect", "roundoff", "c"}, {}};
  double c_max = 0.0, worst_growth = 0.0;
  bool stable = true;
  for (const auto& job : jobs) {
    const std::string name = be_family(job.K)[job.f].name;
    double best = INFINITY;
    for (std::size_t k = 0; k < bc.cells.size(); ++k) {
      if (k > 0) {
        const bool ok = job.c[k] <= best * (1.0 + bc.growth_tolerance) + 1e-9;
        stable = stable && ok;
        if (best > 0.0) worst_growth = std::max(worst_growth, job.c[k] / best - 1.0);
        else if (job.c[k] > 1e-9) worst_growth = INFINITY;
      }
      best = std::min(best, job.c[k]);
      c_max = std::max(c_max, job.c[k]);
      rep.records.push_back({{"kind", "be_defect"},
                             {"n", job.n},
                             {"K", job.K},
                             {"function", name},
                             {"N", bc.cells[k]},
                             {"dr", job.dr[k]},
                             {"defect", job.defect[k]},
                             {"roundoff", job.roundoff[k]},
                             {"c", job.c[k]}});
      table.rows.push_back({std::to_string(job.n), format_number(job.K), name, std::to_string(bc.cells[k]),
                            format_number(job.dr[k]), format_number(job.defect[k]), format_number(job.roundoff[k]),
                            format_number(job.c[k])});
    }
  }
  rep.tables.push_back(std::move(table));
  rep.scalars["c_max"] = c_max;
  rep.verdicts.push_back(make_verdict("refinement_stable", stable, worst_growth, bc.growth_tolerance,
                                      "c = max(0, -defect - roundoff) / dr must not grow under refinement"));

  // Euclidean equality case f = |x|^2 / 2
  double worst_eq = 0.0;
  for (int n : bc.dimensions) {
    for (std::size_t N : bc.cells) {
      auto g = make_grid(n, 0.0, bc.R_max, N);
      const auto f = PotentialField::from_function(g, [](double r) { return 0.5 * r * r; });
      const double d = be_defect(f, 0.0, n);
      worst_eq = std::max(worst_eq, std::abs(d));
      rep.records.push_back({{"kind", "equality_case"}, {"n", n}, {"N", N}, {"defect", d}});
    }
  }
  rep.verdicts.push_back(make_verdict("equality_case", worst_eq < bc.equality_tolerance, worst_eq,
                                      bc.equality_tolerance, "Euclidean |x|^2/2 with lambda = 0"));

  // sharpness: a lambda above the Ricci bound fails for some f = a r
  std::mt19937_64 rng(cfg.seed);
  for (int n : bc.dimensions) {
    for (double K : bc.curvatures) {
      if (K == 0.0) continue;
      const double lambda = -(n - 1) * K + bc.lambda_gap;
      auto g = make_grid(n, K, bc.R_max, bc.cells.front());
      double most_negative = INFINITY;
      std::vector<double> slopes{1.0};
      for (int p = 0; p < bc.random_probes; ++p) slopes.push_back(0.25 + 3.75 * uniform01(rng));
      for (double a : slopes) {
        const auto f = PotentialField::from_function(g, [a](double r) { return a * r; });
        most_negative = std::min(most_negative, be_defect(f, lambda, n));
      }
      const double floor = 1e-6;
      rep.records.push_back({{"kind", "sharpness"}, {"n", n}, {"K", K}, {"lambda", lambda}, {"min_defect", most_negative}});
      rep.verdicts.push_back(make_verdict("sharpness_n" + std::to_string(n) + "_" + tag("K", K),
                                          most_negative < -floor, most_negative, -floor,
                                          "lambda above -(n-1)K is violated by some f = a r"));
    }
  }
  return rep;
}

Report run_hamiltonian_check(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.config = cfg;
  const auto& hc = cfg.hamiltonian;
  const int n = cfg.manifold.n;
  const double K = cfg.manifold.K, M = cfg.datum.M;
  const auto P = make_nonlinearity(cfg.nonlinearity);
  auto grid = make_grid(n, K, cfg.grid.R_max, cfg.grid.N);
  const auto rho0 = near_dirac_datum(grid, M, cfg.datum.width);
  const auto Pe = regularized(cfg, P, sup_norm(rho0));
  const auto traj = evolve(rho0, Pe, cfg.time.T, solver_config(cfg, {}, true));
  rep.records.push_back(solver_record("rho", traj));

  std::vector<double> tg;
  for (const auto& s : traj.states) tg.push_back(s.t);
  const double a = hc.potential_frequency;
  const auto phiT = PotentialField::from_function(grid, [a](double r) { return std::sin(a * r); });
  const auto phis = backward_adjoint_solve(traj, Pe, phiT, tg);

  const double C_raw = smoothing_ratio(traj, P.m(), n, M);
  DecayParameters dp;
  dp.ricci_bound = (n - 1) * K;
  dp.c1 = P.c1();
  dp.m = P.m();
  dp.n = n;
  dp.mass = M;
  dp.C_fit = hc.C_fit > 0.0 ? hc.C_fit : clamp_fit(C_raw);
  dp.eps = Pe.eps();
  rep.scalars["C"] = {{"self_fit_raw", C_raw}, {"C_fit", dp.C_fit}, {"source", hc.C_fit > 0.0 ? "config" : "self"}};
  const auto decay = hamiltonian_decay_check(traj, phis, Pe, dp, tg);

  double sup_phi = 0.0;
  for (const auto& p : phis) sup_phi = std::max(sup_phi, p.sup_norm());
  const double max_principle_excess = sup_phi - phiT.sup_norm();

  const auto w0 = LinearizedField(grid, PotentialField::from_function(grid, [](double r) { return std::exp(-r * r); }).values);
  const auto ws = forward_linearized_solve(traj, Pe, w0, tg);
  const double pair0 = duality_pairing(ws.front(), phis.front());
  double drift = 0.0;
  for (std::size_t k = 0; k < ws.size(); ++k) {
    drift = std::max(drift, std::abs(duality_pairing(ws[k], phis[k]) - pair0) / std::abs(pair0));
  }

  CsvTable table{"hamiltonian.csv", {"t", "energy", "defect", "bound", "pointwise", "integrated"}, {}};
  for (const auto& r : decay.records) {
    rep.records.push_back({{"kind", "decay"},
                           {"t", r.t},
                           {"energy", r.energy},
                           {"defect", r.defect},
                           {"bound", r.bound},
                           {"pointwise_ok", r.pointwise_ok},
                           {"integrated_ok", r.integrated_ok}});
    table.rows.push_back({format_number(r.t), format_number(r.energy), format_number(r.defect),
                          format_number(r.bound), flag(r.pointwise_ok), flag(r.integrated_ok)});
  }
  rep.tables.push_back(std::move(table));
  rep.scalars["decay"] = {{"tolerance", decay.tolerance}, {"min_defect", decay.min_defect}};
  rep.verdicts.push_back(make_verdict("pointwise_decay", decay.pointwise_ok, decay.min_defect, -decay.tolerance,
                                      "1/2 dE/dt + K sum Gamma(phi) P_eps(rho) V >= -tol at every step"));
  rep.verdicts.push_back(make_verdict("integrated_decay", decay.integrated_ok, decay.records.back().energy,
                                      decay.records.back().bound, "E(t) >= lower factor(t) E(0)"));
  rep.verdicts.push_back(make_verdict("duality_pairing", drift < hc.duality_tolerance, drift, hc.duality_tolerance,
                                      "relative drift of sum w phi V"));
  rep.verdicts.push_back(make_verdict("max_principle", max_principle_excess <= 1e-9, max_principle_excess, 1e-9,
                                      "sup |phi(t)| - sup |phi_T|"));

  // a handful of density snapshots
  std::vector<DensityField> snaps;
  const std::size_t stride = std::max<std::size_t>(1, traj.states.size() / 10);
  for (std::size_t k = 0; k < traj.states.size(); k += stride) snaps.push_back(traj.states[k]);
  if (snaps.back().t != traj.states.back().t) snaps.push_back(traj.states.back());
  rep.checkpoints.push_back({"rho", std::move(snaps)});
  return rep;
}

Report run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::Smoothing: return run_smoothing_scan(cfg);
    case Experiment::Stability: return run_stability_check(cfg);
    case Experiment::Optimality: return run_optimality_scan(cfg);
    case Experiment::CompactSupport: return run_compact_support_check(cfg);
    case Experiment::BeCheck: return run_be_check(cfg);
    case Experiment::Hamiltonian: return run_hamiltonian_check(cfg);
  }
  throw std::logic_error("run_experiment: bad enum");
}

std::vector<ConservationCase> run_conservation_suite(std::uint64_t seed, int count, int threads) {
  if (count < 0) throw std::invalid_argument("run_conservation_suite: count must be >= 0");
  struct Draw {
    int n;
    double m, K;
    double h1, r1, h2, r2;
  };
  std::mt19937_64 rng(seed);
  const double ms[] = {1.5, 2.0, 3.0};
  std::vector<Draw> draws;
  for (int i = 0; i < count; ++i) {
    Draw d;
    d.n = 2 + static_cast<int>(rng() % 2);
    d.m = ms[rng() % 3];
    d.K = static_cast<double>(rng() % 2);
    d.h1 = 0.5 + 2.5 * uniform01(rng);
    d.r1 = 0.3 + 0.6 * uniform01(rng);
    d.h2 = 0.5 + 2.5 * uniform01(rng);
    d.r2 = 0.3 + 0.6 * uniform01(rng);
    draws.push_back(d);
  }

  std::vector<ConservationCase> out(draws.size());
  parallel_for(draws.size(), threads, [&](std::size_t i) {
    const Draw& d = draws[i];
    auto g = make_grid(d.n, d.K, 3.0, 200);
    auto bump = [&](double h, double R) {
      return DensityField::from_function(
          g, [=](double r) { return r < R ? h * std::pow(std::cos(0.5 * M_PI * r / R), 2) : 0.0; });
    };
    const auto a = bump(d.h1, d.r1), b = bump(d.h2, d.r2);
    const auto Pe = regularize(PorousNonlinearity::pure_power(d.m), 1e-2 / (2.0 * std::max(sup_norm(a), sup_norm(b))));
    SolverConfig sc;
    sc.record_every_step = true;
    sc.dt_max = 5e-3;
    const auto trajs = evolve_many({a, b}, Pe, 0.2, sc);

    ConservationCase c{d.n, d.m, d.K, 0.0, -INFINITY, -INFINITY, -INFINITY, false};
    const auto& ta = trajs[0];
    const auto& tb = trajs[1];
    const double ma = mass(a), mb = mass(b), psi0 = free_energy(a, Pe);
    for (std::size_t k = 1; k < ta.states.size(); ++k) {
      const auto& prev = ta.states[k - 1];
      const auto& now = ta.states[k];
      c.max_mass_drift = std::max({c.max_mass_drift, std::abs(mass(now) - ma) / ma,
                                   std::abs(mass(tb.states[k]) - mb) / mb});
      for (double p : {1.0, 2.0, 4.0, static_cast<double>(INFINITY)}) {
        c.worst_lp_growth = std::max(c.worst_lp_growth, lp_norm(now, p) / lp_norm(prev, p) - 1.0);
      }
      c.worst_l1_growth = std::max(
          c.worst_l1_growth, (l1_distance(now, tb.states[k]) - l1_distance(prev, tb.states[k - 1])) / (ma + mb));
      c.worst_energy_excess =
          std::max(c.worst_energy_excess, (ta.dissipation[k] + free_energy(now, Pe) - psi0) / psi0);
    }
    c.pass = c.max_mass_drift < 1e-10 && c.worst_lp_growth <= 1e-9 && c.worst_l1_growth <= 1e-9 &&
             c.worst_energy_excess <= 1e-8;
    out[i] = c;
  });
  return out;
}

}  // namespace pmelab
