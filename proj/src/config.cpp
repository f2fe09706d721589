#include "pmelab/config.hpp"

#include <charconv>
#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace pmelab {

namespace {

const std::vector<std::pair<Experiment, std::string>>& name_table() {
  static const std::vector<std::pair<Experiment, std::string>> table{
      {Experiment::Smoothing, "smoothing"},
      {Experiment::Stability, "stability"},
      {Experiment::Optimality, "optimality"},
      {Experiment::CompactSupport, "compact_support"},
      {Experiment::BeCheck, "be_check"},
      {Experiment::Hamiltonian, "hamiltonian"},
  };
  return table;
}

// One TOML table. Every key read is remembered; finish() rejects the rest.
class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  Section sub(const std::string& key) {
    const toml::node* node = find(key);
    if (!node) return Section(nullptr, qualified(key));
    if (!node->is_table()) fail(key, "expected a table");
    return Section(node->as_table(), qualified(key));
  }

  void number(const std::string& key, double& out) {
    if (const toml::node* node = find(key)) out = to_double(*node, key);
  }

  void integer(const std::string& key, int& out) {
    if (const toml::node* node = find(key)) {
      const auto v = to_int(*node, key);
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail(key, "out of range");
      out = static_cast<int>(v);
    }
  }

  void count(const std::string& key, std::size_t& out) {
    if (const toml::node* node = find(key)) {
      const auto v = to_int(*node, key);
      if (v < 0) fail(key, "must be >= 0");
      out = static_cast<std::size_t>(v);
    }
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (const toml::node* node = find(key)) {
      // TOML integers stop at 2^63 - 1; larger seeds go in a decimal string
      if (node->is_string()) {
        const std::string& text = node->as_string()->get();
        const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
        if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) fail(key, "expected an unsigned 64-bit integer");
        return;
      }
      const auto v = to_int(*node, key);
      if (v < 0) fail(key, "must be >= 0");
      out = static_cast<std::uint64_t>(v);
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const toml::node* node = find(key)) {
      if (!node->is_boolean()) fail(key, "expected a boolean");
      out = node->as_boolean()->get();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const toml::node* node = find(key)) {
      if (!node->is_string()) fail(key, "expected a string");
      out = node->as_string()->get();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const toml::node* node = find(key)) {
      std::vector<double> v;
      for (const auto& item : array(*node, key)) v.push_back(to_double(item, key));
      out = std::move(v);
    }
  }

  void integers(const std::string& key, std::vector<int>& out) {
    if (const toml::node* node = find(key)) {
      std::vector<int> v;
      for (const auto& item : array(*node, key)) v.push_back(static_cast<int>(to_int(item, key)));
      out = std::move(v);
    }
  }

  void counts(const std::string& key, std::vector<std::size_t>& out) {
    if (const toml::node* node = find(key)) {
      std::vector<std::size_t> v;
      for (const auto& item : array(*node, key)) {
        const auto x = to_int(item, key);
        if (x < 0) fail(key, "entries must be >= 0");
        v.push_back(static_cast<std::size_t>(x));
      }
      out = std::move(v);
    }
  }

  void pairs(const std::string& key, std::vector<std::pair<double, double>>& out) {
    if (const toml::node* node = find(key)) {
      std::vector<std::pair<double, double>> v;
      for (const auto& item : array(*node, key)) {
        const auto* inner = item.as_array();
        if (!inner || inner->size() != 2) fail(key, "expected [coefficient, exponent] pairs");
        v.emplace_back(to_double((*inner)[0], key), to_double((*inner)[1], key));
      }
      out = std::move(v);
    }
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!seen_.count(key)) {
        throw ConfigError("unknown configuration key '" + qualified(key) + "'");
      }
    }
  }

 private:
  const toml::node* find(const std::string& key) {
    seen_.insert(key);
    if (!table_) return nullptr;
    return table_->get(key);
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("configuration key '" + qualified(key) + "': " + what);
  }

  double to_double(const toml::node& node, const std::string& key) const {
    if (node.is_integer()) return static_cast<double>(node.as_integer()->get());
    if (node.is_floating_point()) return node.as_floating_point()->get();
    fail(key, "expected a number");
  }

  std::int64_t to_int(const toml::node& node, const std::string& key) const {
    if (!node.is_integer()) fail(key, "expected an integer");
    return node.as_integer()->get();
  }

  const toml::array& array(const toml::node& node, const std::string& key) const {
    if (!node.is_array()) fail(key, "expected an array");
    return *node.as_array();
  }

  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid configuration: " + what);
}

}  // namespace

Experiment parse_experiment(std::string_view name) {
  for (const auto& [e, s] : name_table()) {
    if (s == name) return e;
  }
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string experiment_name(Experiment e) {
  for (const auto& [x, s] : name_table()) {
    if (x == e) return s;
  }
  throw std::logic_error("experiment_name: bad enum");
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& p : name_table()) v.push_back(p.second);
    return v;
  }();
  return names;
}

ExperimentConfig ExperimentConfig::defaults(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::Smoothing:
      c.manifold = {3, 0.0};
      c.grid = {4096, 1.5};
      c.time = {1e-3, 0.1, 11};
      c.solver.dt_max = 1e-3;
      break;
    case Experiment::Stability:
      c.manifold = {2, 1.0};
      c.grid = {1000, 1.0};
      c.time = {1e-4, 1e-2, 9};
      c.solver.dt_max = 2e-4;
      break;
    case Experiment::Optimality:
      c.manifold = {2, 1.0};
      c.grid = {2000, 1.0};
      c.time = {1e-4, 1e-2, 9};
      c.datum.width = c.datum.width_hat = 0.005;
      c.solver.dt_max = 2e-4;
      break;
    case Experiment::CompactSupport:
      c.manifold = {3, 1.0};
      c.grid = {2000, 1.5};
      c.nonlinearity.eps_ratio = 1e-8;
      c.solver.dt_max = 1e-5;
      break;
    case Experiment::BeCheck:
      break;
    case Experiment::Hamiltonian:
      c.manifold = {2, 1.0};
      c.grid = {400, 2.0};
      c.time = {0.0, 0.05, 0};
      c.datum.width = c.datum.width_hat = 0.1;
      c.solver.dt_max = 2e-3;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  require(manifold.n >= 2, "manifold.n must be >= 2");
  require(manifold.K >= 0.0 && std::isfinite(manifold.K), "manifold.K must be >= 0");
  require(nonlinearity.m > 1.0, "nonlinearity.m must be > 1");
  require(nonlinearity.flavor == "pure_power" || nonlinearity.flavor == "polynomial",
          "nonlinearity.flavor must be pure_power or polynomial");
  require(nonlinearity.flavor != "polynomial" || !nonlinearity.terms.empty(),
          "nonlinearity.terms must be set for the polynomial flavor");
  require(nonlinearity.coefficient > 0.0, "nonlinearity.coefficient must be > 0");
  require(nonlinearity.c0 > 0.0 && nonlinearity.c1 >= nonlinearity.c0, "need 0 < c0 <= c1");
  require(nonlinearity.eps_ratio > 0.0 && nonlinearity.eps_ratio <= 2.0,
          "nonlinearity.eps_ratio must lie in (0, 2]");
  require(datum.M > 0.0 && datum.M_hat > 0.0, "datum masses must be > 0");
  require(datum.width > 0.0 && datum.width_hat > 0.0, "datum widths must be > 0");
  require(grid.N >= 8, "grid.N must be >= 8");
  require(grid.R_max > 0.0, "grid.R_max must be > 0");
  require(time.T > 0.0, "time.T must be > 0");
  require(time.checkpoints >= 0, "time.checkpoints must be >= 0");
  require(time.checkpoints < 2 || (time.t_start > 0.0 && time.t_start < time.T),
          "time.t_start must lie in (0, T)");
  require(solver.dt_initial > 0.0 && solver.dt_max >= solver.dt_initial, "need 0 < dt_initial <= dt_max");
  require(solver.newton_tol > 0.0 && solver.newton_max_iters > 0, "bad Newton settings");
  require(ot.engine == "exact" || ot.engine == "sinkhorn", "ot.engine must be exact or sinkhorn");
  require(ot.ent_reg > 0.0 && ot.sinkhorn_tolerance > 0.0, "ot tolerances must be > 0");
  require(ot.radial_bins >= 1 && ot.angular_nodes >= 1, "ot cloud sizes must be >= 1");
  require(ot.bisector_radial_nodes >= 1 && ot.bisector_angular_nodes >= 2, "bad bisector quadrature");
  require(threads >= 0, "threads must be >= 0");

  require(!smoothing.curvatures.empty() && !smoothing.masses.empty(), "smoothing sweeps must be nonempty");
  for (double K : smoothing.curvatures) require(K >= 0.0, "smoothing.curvatures must be >= 0");
  for (double M : smoothing.masses) require(M > 0.0, "smoothing.masses must be > 0");
  require(smoothing.mass_time > 0.0 && smoothing.tolerance > 0.0, "bad smoothing settings");

  require(stability.delta >= 0.0, "stability.delta must be >= 0");
  require(!stability.dimensions.empty(), "stability.dimensions must be nonempty");
  for (int n : stability.dimensions) require(n >= 2, "stability.dimensions must be >= 2");
  require(stability.C_fit >= 0.0 && stability.slack >= 0.0 && stability.control_slack >= 0.0,
          "bad stability settings");
  require(stability.control_width > 0.0 && stability.control_width_hat > 0.0, "control widths must be > 0");

  require(optimality.delta > 0.0 && optimality.delta_threshold > 0.0, "optimality.delta must be > 0");
  for (double K : optimality.curvatures) require(K > 0.0, "optimality.curvatures must be > 0");
  require(optimality.slope_tolerance > 0.0 && optimality.proportionality_tolerance > 0.0 &&
              optimality.sandwich_slack >= 0.0,
          "bad optimality tolerances");

  require(compact_support.R_D > 0.0 && compact_support.collar > 0.0 &&
              compact_support.collar < compact_support.R_D,
          "need 0 < collar < R_D");
  require(compact_support.datum_radius > 0.0 && compact_support.datum_height > 0.0,
          "compact support datum must be positive");
  require(compact_support.threshold > 0.0 && compact_support.checkpoints >= 1, "bad compact support settings");

  require(!be_check.dimensions.empty() && !be_check.curvatures.empty() && be_check.cells.size() >= 2,
          "be_check sweeps need dimensions, curvatures and at least two grids");
  for (int n : be_check.dimensions) require(n >= 2, "be_check.dimensions must be >= 2");
  for (double K : be_check.curvatures) require(K >= 0.0, "be_check.curvatures must be >= 0");
  for (std::size_t N : be_check.cells) require(N >= 16, "be_check.cells must be >= 16");
  require(be_check.R_max > 0.0 && be_check.growth_tolerance >= 0.0 && be_check.equality_tolerance > 0.0 &&
              be_check.lambda_gap > 0.0 && be_check.random_probes >= 0,
          "bad be_check settings");

  require(hamiltonian.C_fit >= 0.0 && hamiltonian.duality_tolerance > 0.0, "bad hamiltonian settings");
}

nlohmann::json ExperimentConfig::to_json() const {
  using nlohmann::json;
  json terms = json::array();
  for (const auto& [c, p] : nonlinearity.terms) terms.push_back({c, p});
  return json{
      {"experiment", experiment_name(experiment)},
      {"seed", seed},
      {"cartan_hadamard", cartan_hadamard},
      {"threads", threads},
      {"out", out},
      {"manifold", {{"n", manifold.n}, {"K", manifold.K}}},
      {"nonlinearity",
       {{"flavor", nonlinearity.flavor},
        {"m", nonlinearity.m},
        {"coefficient", nonlinearity.coefficient},
        {"terms", terms},
        {"c0", nonlinearity.c0},
        {"c1", nonlinearity.c1},
        {"eps_ratio", nonlinearity.eps_ratio}}},
      {"datum",
       {{"M", datum.M}, {"M_hat", datum.M_hat}, {"width", datum.width}, {"width_hat", datum.width_hat}}},
      {"grid", {{"N", grid.N}, {"R_max", grid.R_max}}},
      {"time", {{"t_start", time.t_start}, {"T", time.T}, {"checkpoints", time.checkpoints}}},
      {"solver",
       {{"dt_initial", solver.dt_initial},
        {"dt_max", solver.dt_max},
        {"newton_tol", solver.newton_tol},
        {"newton_max_iters", solver.newton_max_iters}}},
      {"ot",
       {{"engine", ot.engine},
        {"ent_reg", ot.ent_reg},
        {"sinkhorn_tolerance", ot.sinkhorn_tolerance},
        {"radial_bins", ot.radial_bins},
        {"angular_nodes", ot.angular_nodes},
        {"bisector_radial_nodes", ot.bisector_radial_nodes},
        {"bisector_angular_nodes", ot.bisector_angular_nodes}}},
      {"smoothing",
       {{"curvatures", smoothing.curvatures},
        {"masses", smoothing.masses},
        {"mass_time", smoothing.mass_time},
        {"tolerance", smoothing.tolerance}}},
      {"stability",
       {{"delta", stability.delta},
        {"dimensions", stability.dimensions},
        {"C_fit", stability.C_fit},
        {"slack", stability.slack},
        {"control", stability.control},
        {"control_width", stability.control_width},
        {"control_width_hat", stability.control_width_hat},
        {"control_slack", stability.control_slack}}},
      {"optimality",
       {{"delta", optimality.delta},
        {"delta_threshold", optimality.delta_threshold},
        {"curvatures", optimality.curvatures},
        {"slope_tolerance", optimality.slope_tolerance},
        {"proportionality_tolerance", optimality.proportionality_tolerance},
        {"sandwich_slack", optimality.sandwich_slack}}},
      {"compact_support",
       {{"R_D", compact_support.R_D},
        {"collar", compact_support.collar},
        {"datum_radius", compact_support.datum_radius},
        {"datum_height", compact_support.datum_height},
        {"threshold", compact_support.threshold},
        {"checkpoints", compact_support.checkpoints}}},
      {"be_check",
       {{"dimensions", be_check.dimensions},
        {"curvatures", be_check.curvatures},
        {"cells", be_check.cells},
        {"R_max", be_check.R_max},
        {"growth_tolerance", be_check.growth_tolerance},
        {"equality_tolerance", be_check.equality_tolerance},
        {"lambda_gap", be_check.lambda_gap},
        {"random_probes", be_check.random_probes}}},
      {"hamiltonian",
       {{"C_fit", hamiltonian.C_fit},
        {"potential_frequency", hamiltonian.potential_frequency},
        {"duality_tolerance", hamiltonian.duality_tolerance}}},
  };
}

ExperimentConfig parse_config(std::string_view toml_text, Experiment e) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& err) {
    std::ostringstream os;
    os << "TOML parse error at line " << err.source().begin.line << ": " << err.description();
    throw ConfigError(os.str());
  }

  ExperimentConfig c = ExperimentConfig::defaults(e);
  Section top(&root, "");
  std::string name = experiment_name(e);
  top.string("experiment", name);
  if (parse_experiment(name) != e) {
    throw ConfigError("config file is for experiment '" + name + "', not '" + experiment_name(e) + "'");
  }
  top.unsigned64("seed", c.seed);
  top.boolean("cartan_hadamard", c.cartan_hadamard);
  top.integer("threads", c.threads);
  top.string("out", c.out);

  {
    auto s = top.sub("manifold");
    s.integer("n", c.manifold.n);
    s.number("K", c.manifold.K);
    s.finish();
  }
  {
    auto s = top.sub("nonlinearity");
    s.string("flavor", c.nonlinearity.flavor);
    s.number("m", c.nonlinearity.m);
    s.number("coefficient", c.nonlinearity.coefficient);
    s.pairs("terms", c.nonlinearity.terms);
    s.number("c0", c.nonlinearity.c0);
    s.number("c1", c.nonlinearity.c1);
    s.number("eps_ratio", c.nonlinearity.eps_ratio);
    s.finish();
  }
  {
    auto s = top.sub("datum");
    s.number("M", c.datum.M);
    s.number("M_hat", c.datum.M_hat);
    s.number("width", c.datum.width);
    s.number("width_hat", c.datum.width_hat);
    s.finish();
  }
  {
    auto s = top.sub("grid");
    s.count("N", c.grid.N);
    s.number("R_max", c.grid.R_max);
    s.finish();
  }
  {
    auto s = top.sub("time");
    s.number("t_start", c.time.t_start);
    s.number("T", c.time.T);
    s.integer("checkpoints", c.time.checkpoints);
    s.finish();
  }
  {
    auto s = top.sub("solver");
    s.number("dt_initial", c.solver.dt_initial);
    s.number("dt_max", c.solver.dt_max);
    s.number("newton_tol", c.solver.newton_tol);
    s.integer("newton_max_iters", c.solver.newton_max_iters);
    s.finish();
  }
  {
    auto s = top.sub("ot");
    s.string("engine", c.ot.engine);
    s.number("ent_reg", c.ot.ent_reg);
    s.number("sinkhorn_tolerance", c.ot.sinkhorn_tolerance);
    s.integer("radial_bins", c.ot.radial_bins);
    s.integer("angular_nodes", c.ot.angular_nodes);
    s.integer("bisector_radial_nodes", c.ot.bisector_radial_nodes);
    s.integer("bisector_angular_nodes", c.ot.bisector_angular_nodes);
    s.finish();
  }
  {
    auto s = top.sub("smoothing");
    s.numbers("curvatures", c.smoothing.curvatures);
    s.numbers("masses", c.smoothing.masses);
    s.number("mass_time", c.smoothing.mass_time);
    s.number("tolerance", c.smoothing.tolerance);
    s.finish();
  }
  {
    auto s = top.sub("stability");
    s.number("delta", c.stability.delta);
    s.integers("dimensions", c.stability.dimensions);
    s.number("C_fit", c.stability.C_fit);
    s.number("slack", c.stability.slack);
    s.boolean("control", c.stability.control);
    s.number("control_width", c.stability.control_width);
    s.number("control_width_hat", c.stability.control_width_hat);
    s.number("control_slack", c.stability.control_slack);
    s.finish();
  }
  {
    auto s = top.sub("optimality");
    s.number("delta", c.optimality.delta);
    s.number("delta_threshold", c.optimality.delta_threshold);
    s.numbers("curvatures", c.optimality.curvatures);
    s.number("slope_tolerance", c.optimality.slope_tolerance);
    s.number("proportionality_tolerance", c.optimality.proportionality_tolerance);
    s.number("sandwich_slack", c.optimality.sandwich_slack);
    s.finish();
  }
  {
    auto s = top.sub("compact_support");
    s.number("R_D", c.compact_support.R_D);
    s.number("collar", c.compact_support.collar);
    s.number("datum_radius", c.compact_support.datum_radius);
    s.number("datum_height", c.compact_support.datum_height);
    s.number("threshold", c.compact_support.threshold);
    s.integer("checkpoints", c.compact_support.checkpoints);
    s.finish();
  }
  {
    auto s = top.sub("be_check");
    s.integers("dimensions", c.be_check.dimensions);
    s.numbers("curvatures", c.be_check.curvatures);
    s.counts("cells", c.be_check.cells);
    s.number("R_max", c.be_check.R_max);
    s.number("growth_tolerance", c.be_check.growth_tolerance);
    s.number("equality_tolerance", c.be_check.equality_tolerance);
    s.number("lambda_gap", c.be_check.lambda_gap);
    s.integer("random_probes", c.be_check.random_probes);
    s.finish();
  }
  {
    auto s = top.sub("hamiltonian");
    s.number("C_fit", c.hamiltonian.C_fit);
    s.number("potential_frequency", c.hamiltonian.potential_frequency);
    s.number("duality_tolerance", c.hamiltonian.duality_tolerance);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, Experiment e) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), e);
}

}  // namespace pmelab
