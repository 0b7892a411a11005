#pragma once

// Batch experiments behind the command-line front end and the acceptance
// binary. A config is validated completely when parsed; running it performs
// the computation and yields named metrics, pass/fail verdicts and CSV tables.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ceuler {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootVariable = "CEULER_OUTPUT_ROOT";
inline constexpr const char* kPrngName = "mt19937_64";

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunResult {
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<Verdict> verdicts;
  std::map<std::string, std::string> csv;  // file name -> contents
  nlohmann::json extra = nlohmann::json::object();
};

struct ExperimentConfig {
  std::string kind;
  std::string output;  // directory name below the output root
  std::uint64_t seed = 0;
  std::string float_env;
  int jobs = 1;
  nlohmann::json source;  // the config as read
  std::function<RunResult(int jobs)> job;
};

/// Kinds: saturation-sweep, solver-convergence, mass-conservation,
/// step1-reproduction, additive-reduction, relaxation, steering-sweep,
/// exact-projection, lipschitz. Throws InvalidArgument on any defect.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

std::vector<std::string> experiment_kinds();

/// Output root: $CEULER_OUTPUT_ROOT when set, else `fallback`.
std::filesystem::path output_root(const std::filesystem::path& fallback = "runs");

/// Writes report.json and the CSV tables into dir (created if needed).
void write_artifacts(const ExperimentConfig& config, const RunResult& result, double runtime_seconds,
                     const std::filesystem::path& dir);

/// Writes error.json for a run that failed during computation.
void write_error(const ExperimentConfig& config, const std::string& type, const std::string& message,
                 const std::filesystem::path& dir);

/// Reads report.json files (read-only) and returns one line per verdict
/// plus a long-format CSV (run,kind,metric,value) of every metric.
struct Digest {
  std::vector<std::string> lines;
  std::string long_csv;
  bool all_pass = true;
};
Digest digest_reports(const std::vector<std::filesystem::path>& dirs);

/// Least-squares slope of log(error) against log(dt).
double fitted_order(const std::vector<double>& dt, const std::vector<double>& error);

}  // namespace ceuler
