#pragma once

#include "pmelab/config.hpp"
#include "pmelab/pme_solver.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace pmelab {

enum class VerdictStatus { Pass, Fail, Withheld };

struct Verdict {
  std::string name;
  VerdictStatus status = VerdictStatus::Fail;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;

  bool passed() const { return status == VerdictStatus::Pass; }
};

Verdict make_verdict(std::string name, bool pass, double value, double threshold, std::string detail = {});

/// Least-squares line y = intercept + slope x; x and y are emitted as fit_<name>.csv.
struct Fit {
  std::string name;
  std::vector<double> x, y;
  double slope = 0.0;
  double intercept = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

Fit fit_line(std::string name, std::vector<double> x, std::vector<double> y);

struct CsvTable {
  std::string filename;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Shortest round-trip text for a double.
std::string format_number(double v);

struct CheckpointSet {
  std::string subdir;
  std::vector<DensityField> states;
};

struct Report {
  ExperimentConfig config;
  nlohmann::json records = nlohmann::json::array();
  std::vector<Fit> fits;
  nlohmann::json scalars = nlohmann::json::object();  // fitted constants that are not lines
  std::vector<Verdict> verdicts;
  std::vector<CsvTable> tables;
  std::vector<CheckpointSet> checkpoints;

  bool all_pass() const;
  /// Top-level keys: config, records, fits, verdicts.
  nlohmann::json to_json() const;
};

/// Writes report.json, the CSV tables, fit_<name>.csv, checkpoint CSVs under
/// their subdirectories, and manifest.json. Returns the written paths relative
/// to dir, sorted.
std::vector<std::string> emit_report(const Report& report, const std::filesystem::path& dir);

}  // namespace pmelab
