// ceuler: run experiments, summarize their artifacts, print decomposition trees.

#include <chrono>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ceuler/errors.hpp"
#include "ceuler/experiments.hpp"
#include "ceuler/saturation.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kComputeFailure = 1;

int run_command(const std::string& config_path, int jobs) {
  ceuler::ExperimentConfig config;
  try {
    config = ceuler::load_config(config_path);
  } catch (const ceuler::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  }
  if (jobs > 0) config.jobs = jobs;
  const auto dir = ceuler::output_root() / config.output;
  const auto start = std::chrono::steady_clock::now();
  ceuler::RunResult result;
  try {
    result = config.job(config.jobs);
  } catch (const std::exception& e) {
    const std::string type = dynamic_cast<const ceuler::Error*>(&e) ? "compute" : "internal";
    std::cerr << "run failed: " << e.what() << '\n';
    try {
      ceuler::write_error(config, type, e.what(), dir);
    } catch (const std::exception& w) {
      std::cerr << "could not record the error: " << w.what() << '\n';
    }
    return kComputeFailure;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    ceuler::write_artifacts(config, result, seconds, dir);
  } catch (const std::exception& e) {
    std::cerr << "cannot write artifacts: " << e.what() << '\n';
    return kComputeFailure;
  }
  for (const auto& v : result.verdicts)
    std::cout << (v.pass ? "PASS  " : "FAIL  ") << v.name << "  " << v.detail << '\n';
  std::cout << "artifacts: " << dir.string() << '\n';
  return 0;
}

int report_command(const std::vector<std::string>& dirs, const std::string& csv_path) {
  if (dirs.empty()) {
    std::cerr << "report: at least one run directory is required\n";
    return kUsage;
  }
  ceuler::Digest digest;
  try {
    digest = ceuler::digest_reports({dirs.begin(), dirs.end()});
  } catch (const ceuler::Error& e) {
    std::cerr << "report: " << e.what() << '\n';
    return 3;
  }
  for (const auto& line : digest.lines) std::cout << line << '\n';
  if (csv_path == "-") {
    std::cout << digest.long_csv;
  } else if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    out << digest.long_csv;
    if (!out) {
      std::cerr << "report: cannot write " << csv_path << '\n';
      return 3;
    }
  }
  return digest.all_pass ? 0 : 1;
}

int decompose_command(const std::string& kind_text, int component, const std::string& l_text) {
  ceuler::Kind kind;
  if (kind_text == "c" || kind_text == "cos") {
    kind = ceuler::Kind::cos;
  } else if (kind_text == "s" || kind_text == "sin") {
    kind = ceuler::Kind::sin;
  } else {
    std::cerr << "decompose: kind must be c, s, cos or sin\n";
    return kUsage;
  }
  if (component < 1 || component > 3) {
    std::cerr << "decompose: component must be 1, 2 or 3\n";
    return kUsage;
  }
  static const std::regex pattern(R"(^\(?\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)?$)");
  std::smatch m;
  if (!std::regex_match(l_text, m, pattern)) {
    std::cerr << "decompose: frequency must look like 1,-1,0 or (1,-1,0)\n";
    return kUsage;
  }
  const ceuler::Frequency l(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]));
  const ceuler::ModeDescriptor mode{kind, component - 1, l};
  if (mode.is_zero()) {
    std::cerr << "decompose: the zero sine mode is identically zero\n";
    return kUsage;
  }
  try {
    const auto tree = ceuler::decompose_mode(kind, component - 1, l);
    const int M = std::max(ceuler::required_resolution(*tree), std::max(2 * l.max_abs(), 1));
    const ceuler::Field want = mode.field(M);
    const ceuler::Field diff = ceuler::evaluate_tree(*tree, M) - want;
    const double residual = std::sqrt(ceuler::inner_product(diff, diff) / ceuler::inner_product(want, want));
    const nlohmann::json out = {{"mode", mode.to_string()},
                                {"level", tree->level},
                                {"level_bound", ceuler::level_bound(l)},
                                {"resolution", M},
                                {"residual", residual},
                                {"tree", ceuler::tree_to_json(*tree)}};
    std::cout << out.dump(2) << '\n';
  } catch (const ceuler::Error& e) {
    std::cerr << "decompose: " << e.what() << '\n';
    return kComputeFailure;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral compressible Euler controllability experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int jobs = 0;
  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("-j,--jobs", jobs, "Worker threads for sweep points (overrides the config)")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> dirs;
  std::string csv_path;
  auto* report = app.add_subcommand("report", "Summarize run directories");
  report->add_option("dirs", dirs, "Run output directories");
  report->add_option("--csv", csv_path, "Write the long-format metric table here ('-' for stdout)");

  std::string kind, frequency;
  int component = 0;
  auto* decompose = app.add_subcommand("decompose", "Print the decomposition tree of a Fourier mode");
  decompose->add_option("kind", kind, "c, s, cos or sin")->required();
  decompose->add_option("i", component, "Vector component, 1 to 3")->required();
  decompose->add_option("l", frequency, "Frequency as a,b,c")->required();

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  if (*run) return run_command(config_path, jobs);
  if (*report) return report_command(dirs, csv_path);
  if (*decompose) return decompose_command(kind, component, frequency);
  if (*version) {
    std::cout << "ceuler " << ceuler::kVersion << '\n';
    return 0;
  }
  return kUsage;
}
