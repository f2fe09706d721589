#include "pmelab/lab.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  using namespace pmelab;
  CLI::App app{"Porous medium flow experiments on model manifolds"};
  app.set_version_flag("--version", PMELAB_VERSION);

  std::string experiment, config_path, out;
  std::optional<std::uint64_t> seed;
  bool cartan_hadamard = false;
  app.add_option("experiment", experiment, "smoothing | stability | optimality | compact_support | be_check | hamiltonian")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  app.add_option("--config", config_path, "TOML configuration file")->required();
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_option("--seed", seed, "RNG seed (overrides the config)");
  app.add_flag("--cartan-hadamard", cartan_hadamard, "use the Cartan-Hadamard stability factor");
  CLI11_PARSE(app, argc, argv);

  try {
    const Experiment e = parse_experiment(experiment);
    ExperimentConfig cfg = load_config(config_path, e);
    if (!out.empty()) cfg.out = out;
    if (seed) cfg.seed = *seed;
    if (cartan_hadamard) cfg.cartan_hadamard = true;
    cfg.validate();

    const Report rep = run_experiment(cfg);
    emit_report(rep, cfg.out);
    for (const auto& v : rep.verdicts) {
      std::cout << (v.passed() ? "PASS " : v.status == VerdictStatus::Withheld ? "WITHHELD " : "FAIL ") << v.name
                << "  value=" << format_number(v.value) << " threshold=" << format_number(v.threshold) << "\n";
    }
    std::cout << "wrote " << cfg.out << "\n";
    return rep.all_pass() ? 0 : 1;
  } catch (const std::exception& err) {
    std::cerr << "pmelab: " << err.what() << "\n";
    return 2;
  }
}
