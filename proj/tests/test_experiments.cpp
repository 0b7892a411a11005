#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ceuler/errors.hpp"
#include "ceuler/experiments.hpp"

namespace ceuler {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kFixtures = CEULER_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ceuler-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args, const fs::path& root, const fs::path& out = "/dev/null") {
  const std::string cmd = std::string(kOutputRootVariable) + "='" + root.string() + "' '" + CEULER_CLI + "' " +
                          args + " > '" + out.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ----------------------------------------------------------------- config

TEST(Config, EveryFixtureParses) {
  for (const auto& entry : fs::directory_iterator(kFixtures)) {
    const auto j = json::parse(std::ifstream(entry.path()));
    if (!j.contains("kind")) continue;  // problem files
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
  }
}

TEST(Config, KindsAreListed) {
  const auto kinds = experiment_kinds();
  for (const char* k : {"saturation-sweep", "solver-convergence", "step1-reproduction", "relaxation",
                        "steering-sweep", "exact-projection"})
    EXPECT_NE(std::find(kinds.begin(), kinds.end(), k), kinds.end()) << k;
}

TEST(Config, RejectsDefectsBeforeCompute) {
  EXPECT_THROW(parse_config(json::array()), InvalidArgument);
  EXPECT_THROW(parse_config({{"payload", json::object()}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "warp-drive"}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "relaxation"}, {"extra", 1}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "relaxation"}, {"payload", {{"nss", {4}}}}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "relaxation"}, {"payload", {{"ns", "four"}}}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "relaxation"}, {"output", "/abs"}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "relaxation"}, {"output", "../up"}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "relaxation"}, {"jobs", 0}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "steering-sweep"}, {"payload", json::object()}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "solver-convergence"}, {"payload", {{"steps", {64}}}}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "mass-conservation"}, {"payload", {{"dt", 0.3}}}}), InvalidArgument);
  EXPECT_THROW(parse_config({{"kind", "lipschitz"}, {"payload", {{"channels", {"rho"}}}}}), InvalidArgument);
  // s^1_(4,0,0) needs two levels of interaction.
  EXPECT_THROW(parse_config({{"kind", "relaxation"},
                             {"payload", {{"mode", {{"kind", "sin"}, {"component", 1}, {"m", {4, 0, 0}}}}}}}),
               InvalidArgument);
}

TEST(Config, IncompatibleMassIsAConfigError) {
  auto j = json::parse(std::ifstream(kFixtures / "steering_sweep.json"));
  auto problem = json::parse(std::ifstream(kFixtures / "steering_pair.json"));
  problem["g_hat"][0]["amplitude"] = 0.5;
  j["payload"]["problem"] = problem;
  EXPECT_THROW(parse_config(j), MassCompatibilityError);
}

TEST(Config, ProjectionTargetsDefaultToTheTarget) {
  auto j = json::parse(std::ifstream(kFixtures / "exact_projection.json"));
  j["payload"]["problem"] = json::parse(std::ifstream(kFixtures / "steering_pair.json"));
  EXPECT_NO_THROW(parse_config(j));
  j["payload"]["target_values"] = {1.0, 2.0};
  EXPECT_THROW(parse_config(j), InvalidArgument);
  j["payload"].erase("target_values");
  j["payload"]["functionals"].push_back({{"field", "g"}, {"kind", "cos"}, {"m", {0, 0, 0}}});
  EXPECT_THROW(parse_config(j), InvalidArgument);
}

TEST(Config, OutputRootFollowsEnvironment) {
  ::setenv(kOutputRootVariable, "/tmp/elsewhere", 1);
  EXPECT_EQ(output_root(), fs::path("/tmp/elsewhere"));
  ::unsetenv(kOutputRootVariable);
  EXPECT_EQ(output_root("fallback"), fs::path("fallback"));
}

// ------------------------------------------------------------------ order

TEST(FittedOrder, RecoversPowerLaws) {
  std::vector<double> dt = {1.0 / 64, 1.0 / 128, 1.0 / 256}, e;
  for (double h : dt) e.push_back(3.0 * std::pow(h, 4));
  EXPECT_NEAR(fitted_order(dt, e), 4.0, 1e-12);
  e = {1e-3, 5e-4, 2.5e-4};
  EXPECT_NEAR(fitted_order(dt, e), 1.0, 1e-12);
  EXPECT_THROW(fitted_order({0.1}, {0.2}), InvalidArgument);
}

// ------------------------------------------------------------- experiments

TEST(Experiments, SmallSaturationSweepCsv) {
  const auto r = parse_config({{"kind", "saturation-sweep"}, {"payload", {{"max_size", 2}}}}).job(1);
  const auto& csv = r.csv.at("sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "kind,i,l1,l2,l3,level,level_bound,residual");
  // Frequencies with 0 < |l|_1 <= 2: 6 + 18 = 24, each with 6 modes.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 24 * 6);
  EXPECT_EQ(r.metrics.at("gram_rank"), 45);
  for (const auto& v : r.verdicts) EXPECT_TRUE(v.pass) << v.name << ": " << v.detail;
}

TEST(Experiments, RelaxationMatchesSquareWaveHalving) {
  const auto r = load_config(kFixtures / "relaxation.json").job(1);
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_TRUE(r.verdicts[0].pass) << r.verdicts[0].detail;
  for (double ratio : r.metrics.at("ratios").get<std::vector<double>>()) EXPECT_NEAR(ratio, 0.5, 1e-9);
}

TEST(Experiments, RelaxationRatiosOutsideWindowFail) {
  const auto r = parse_config({{"kind", "relaxation"},
                               {"payload", {{"ns", {4, 8}}, {"min_ratio", 0.6}, {"max_ratio", 0.9}}}})
                     .job(1);
  EXPECT_FALSE(r.verdicts.at(0).pass);
}

TEST(Experiments, LipschitzSpreadIsNearOne) {
  const auto r = parse_config({{"kind", "lipschitz"},
                               {"seed", 3},
                               {"payload", {{"resolution", 2}, {"T", 0.2}, {"dt", 0.02}, {"epsilons", {1e-2, 1e-3}}}}})
                     .job(2);
  EXPECT_TRUE(r.verdicts.at(0).pass) << r.verdicts.at(0).detail;
  for (const auto& [channel, spread] : r.metrics.at("spread").items()) EXPECT_LT(spread.get<double>(), 1.01) << channel;
}

TEST(Experiments, SeedChangesLipschitzDataButNotShape) {
  auto cfg = [](int seed) {
    return parse_config({{"kind", "lipschitz"},
                         {"seed", seed},
                         {"payload", {{"resolution", 2}, {"T", 0.1}, {"dt", 0.05}, {"epsilons", {1e-3}}}}});
  };
  const auto a = cfg(1).job(1), b = cfg(1).job(3), c = cfg(2).job(1);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_NE(a.csv.at("lipschitz.csv"), c.csv.at("lipschitz.csv"));
}

TEST(Experiments, ShortConvergenceRunIsFourthOrder) {
  const auto r = parse_config({{"kind", "solver-convergence"},
                               {"payload", {{"resolution", 6}, {"T", 0.5}, {"steps", {8, 16, 32}}}}})
                     .job(2);
  EXPECT_GE(r.metrics.at("fitted_order").get<double>(), 3.5);
  EXPECT_LE(r.metrics.at("fitted_order").get<double>(), 4.6);
}

// ---------------------------------------------------------- artifacts, CLI

TEST(Artifacts, ReportRoundTripsThroughDigest) {
  const auto dir = scratch("digest") / "run";
  const auto cfg = parse_config({{"kind", "relaxation"}, {"payload", {{"ns", {4, 8}}}}});
  write_artifacts(cfg, cfg.job(1), 0.25, dir);
  const auto report = json::parse(std::ifstream(dir / "report.json"));
  EXPECT_EQ(report.at("prng"), kPrngName);
  EXPECT_EQ(report.at("kind"), "relaxation");
  EXPECT_EQ(report.at("csv"), json::array({"relaxation.csv"}));
  const auto d = digest_reports({dir});
  ASSERT_EQ(d.lines.size(), 1u);
  EXPECT_EQ(d.lines[0].substr(0, 4), "PASS");
  EXPECT_NE(d.long_csv.find("run,relaxation,sup_norms[0],"), std::string::npos);
  EXPECT_NE(d.long_csv.find("run,relaxation,runtime_seconds,0.25"), std::string::npos);
  EXPECT_THROW(digest_reports({}), InvalidArgument);
  EXPECT_THROW(digest_reports({dir / "missing"}), Error);
  std::ofstream(dir / "report.json") << "{broken";
  EXPECT_THROW(digest_reports({dir}), Error);
}

TEST(Cli, MalformedConfigExitsTwoWithoutOutput) {
  const auto root = scratch("cli-bad");
  std::ofstream(root / "bad.json") << R"({"kind": "relaxation", "payload": {"ns": [4, -8]}})";
  EXPECT_EQ(cli("run '" + (root / "bad.json").string() + "'", root / "out"), 2);
  EXPECT_FALSE(fs::exists(root / "out"));
  std::ofstream(root / "broken.json") << "{";
  EXPECT_EQ(cli("run '" + (root / "broken.json").string() + "'", root / "out"), 2);
  EXPECT_EQ(cli("run '" + (root / "absent.json").string() + "'", root / "out"), 2);
  EXPECT_FALSE(fs::exists(root / "out"));
}

TEST(Cli, ComputeFailureWritesErrorRecord) {
  const auto root = scratch("cli-fail");
  // Huge velocity with a coarse step trips the blow-up monitor.
  std::ofstream(root / "boom.json") << R"({"kind": "mass-conservation", "output": "boom",
    "payload": {"resolution": 2, "max_mode": 2, "amplitude": 50.0, "T": 1.0, "dt": 0.5}})";
  EXPECT_EQ(cli("run '" + (root / "boom.json").string() + "'", root), 1);
  const auto err = json::parse(std::ifstream(root / "boom" / "error.json"));
  EXPECT_EQ(err.at("kind"), "mass-conservation");
  EXPECT_FALSE(err.at("message").get<std::string>().empty());
  EXPECT_FALSE(fs::exists(root / "boom" / "report.json"));
}

TEST(Cli, RunThenReport) {
  const auto root = scratch("cli-run");
  EXPECT_EQ(cli("run '" + (kFixtures / "relaxation.json").string() + "'", root), 0);
  const auto first = slurp(root / "relaxation" / "relaxation.csv");
  EXPECT_EQ(first.substr(0, first.find('\n')), "n,sup_norm,ratio");
  EXPECT_EQ(cli("run --jobs 2 '" + (kFixtures / "relaxation.json").string() + "'", root), 0);
  EXPECT_EQ(slurp(root / "relaxation" / "relaxation.csv"), first);
  EXPECT_EQ(cli("report '" + (root / "relaxation").string() + "' --csv '" + (root / "long.csv").string() + "'",
                root, root / "digest.txt"),
            0);
  EXPECT_EQ(slurp(root / "digest.txt").substr(0, 4), "PASS");
  EXPECT_EQ(slurp(root / "long.csv").substr(0, 22), "run,kind,metric,value\n");
  EXPECT_EQ(cli("report", root), 2);
  EXPECT_EQ(cli("report '" + (root / "nothing").string() + "'", root), 3);
}

TEST(Cli, DecomposeAndVersion) {
  const auto root = scratch("cli-misc");
  EXPECT_EQ(cli("decompose s 1 '1,-1,0'", root, root / "tree.json"), 0);
  const auto j = json::parse(std::ifstream(root / "tree.json"));
  EXPECT_EQ(j.at("mode"), "s^1_(1,-1,0)");
  EXPECT_LE(j.at("level").get<int>(), j.at("level_bound").get<int>());
  EXPECT_LE(j.at("residual").get<double>(), 1e-10);
  EXPECT_EQ(cli("decompose sin 1 '(4,0,0)'", root, root / "tree2.json"), 0);
  EXPECT_EQ(json::parse(std::ifstream(root / "tree2.json")).at("tree").at("level"), 2);
  EXPECT_EQ(cli("decompose x 1 1,0,0", root), 2);
  EXPECT_EQ(cli("decompose s 4 1,0,0", root), 2);
  EXPECT_EQ(cli("decompose s 1 0,0,0", root), 2);
  EXPECT_EQ(cli("decompose s 1 one", root), 2);
  EXPECT_EQ(cli("version", root, root / "v.txt"), 0);
  EXPECT_EQ(slurp(root / "v.txt"), std::string("ceuler ") + kVersion + "\n");
  EXPECT_EQ(cli("", root), 2);
}

}  // namespace
}  // namespace ceuler
