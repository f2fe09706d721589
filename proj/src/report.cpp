#include "pmelab/report.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <toml.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pmelab {

namespace {

std::string status_name(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Pass: return "pass";
    case VerdictStatus::Fail: return "fail";
    case VerdictStatus::Withheld: return "withheld";
  }
  return "fail";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  os.close();
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::string csv_text(const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows) {
  std::string s;
  for (std::size_t j = 0; j < columns.size(); ++j) s += (j ? "," : "") + columns[j];
  s += "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw std::logic_error("csv row width mismatch");
    for (std::size_t j = 0; j < row.size(); ++j) s += (j ? "," : "") + row[j];
    s += "\n";
  }
  return s;
}

// Non-finite doubles become null in JSON; keep them readable instead.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

}  // namespace

Verdict make_verdict(std::string name, bool pass, double value, double threshold, std::string detail) {
  return {std::move(name), pass ? VerdictStatus::Pass : VerdictStatus::Fail, value, threshold, std::move(detail)};
}

Fit fit_line(std::string name, std::vector<double> x, std::vector<double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_line: degenerate abscissae");
  Fit f;
  f.name = std::move(name);
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.x = std::move(x);
  f.y = std::move(y);
  return f;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool Report::all_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed(); });
}

nlohmann::json Report::to_json() const {
  using nlohmann::json;
  json fits_json = json::object();
  for (const auto& f : fits) {
    json j = f.extra;
    j["slope"] = number(f.slope);
    j["intercept"] = number(f.intercept);
    j["points"] = f.x.size();
    fits_json[f.name] = j;
  }
  for (const auto& [k, v] : scalars.items()) fits_json[k] = v;
  json verdict_json = json::array();
  for (const auto& v : verdicts) {
    verdict_json.push_back({{"name", v.name},
                            {"status", status_name(v.status)},
                            {"value", number(v.value)},
                            {"threshold", number(v.threshold)},
                            {"detail", v.detail}});
  }
  return json{{"config", config.to_json()}, {"records", records}, {"fits", fits_json}, {"verdicts", verdict_json}};
}

std::vector<std::string> emit_report(const Report& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<std::string> files;
  write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  files.push_back("report.json");

  for (const auto& t : report.tables) {
    write_file(dir / t.filename, csv_text(t.columns, t.rows));
    files.push_back(t.filename);
  }
  for (const auto& f : report.fits) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < f.x.size(); ++i) {
      rows.push_back({format_number(f.x[i]), format_number(f.y[i]), format_number(f.intercept + f.slope * f.x[i])});
    }
    const std::string name = "fit_" + f.name + ".csv";
    write_file(dir / name, csv_text({"x", "y", "fit"}, rows));
    files.push_back(name);
  }
  for (const auto& set : report.checkpoints) {
    for (const auto& s : set.states) {
      const auto path = write_checkpoint_csv(s, dir / set.subdir);
      files.push_back(fs::relative(path, dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());

  nlohmann::json manifest{
      {"tool", "pmelab"},
      {"version", PMELAB_VERSION},
      {"experiment", experiment_name(report.config.experiment)},
      {"seed", report.config.seed},
      {"config", report.config.to_json()},
      {"all_pass", report.all_pass()},
      {"libraries",
       {{"boost", BOOST_LIB_VERSION},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"tomlplusplus", std::to_string(TOML_LIB_MAJOR) + "." + std::to_string(TOML_LIB_MINOR) + "." +
                             std::to_string(TOML_LIB_PATCH)}}},
      {"compiler", __VERSION__},
      {"files", files},
  };
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  files.push_back("manifest.json");
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace pmelab
