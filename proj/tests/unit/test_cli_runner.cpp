#include "diskflow/cli_runner.hpp"
#include "diskflow/errors.hpp"
#include "diskflow/event_flow.hpp"
#include "diskflow/hyperbolicity.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace diskflow;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(system:
  masses: [1, 1.7, 0.6]
  radius: 0.1
run:
  seed: 42
  t_max: 5
)";

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("diskflow_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "diskflow");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(ParseConfig, MinimalAppliesDefaults) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.masses, (std::vector<double>{1.0, 1.7, 0.6}));
  EXPECT_DOUBLE_EQ(c.radius, 0.1);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_DOUBLE_EQ(c.t_max, 5.0);
  const Tolerances defaults;
  EXPECT_EQ(c.tolerances.collision_root_tol, defaults.collision_root_tol);
  EXPECT_EQ(c.tolerances.rank_rel_tol, defaults.rank_rel_tol);
  EXPECT_EQ(c.l0, Lattice2(1, 0));
  EXPECT_EQ(c.reorth_interval, 10);
  EXPECT_TRUE(c.scan_radii.empty());
}

TEST(ParseConfig, UnknownKeyIsNamed) {
  const auto msg = error_of("system:\n  masses: [1, 1]\n  raduis: 0.1\n");
  EXPECT_NE(msg.find("raduis"), std::string::npos) << msg;
  EXPECT_NE(error_of("sytem:\n  masses: [1, 1]\n").find("sytem"), std::string::npos);
}

TEST(ParseConfig, TypeMismatchReportsLine) {
  const auto msg = error_of("system:\n  masses: [1, 1]\n  radius: wide\n");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(error_of("system:\n  masses: 1\n  radius: 0.1\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of(std::string(kMinimal) + "analysis:\n  ensemble: 2.5\n").find("line 8"),
            std::string::npos);
}

TEST(ParseConfig, SeedIsUnsigned64) {
  const std::string base = "system:\n  masses: [1, 1]\n  radius: 0.1\nrun:\n  seed: ";
  EXPECT_EQ(parse_config(base + "18446744073709551615\n").seed, 18446744073709551615ULL);
  EXPECT_THROW(parse_config(base + "-1\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "18446744073709551616\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "1.5\n"), ConfigError);
}

TEST(ParseConfig, RejectsInvalidSystems) {
  EXPECT_THROW(parse_config("system:\n  masses: [1]\n  radius: 0.1\n"), ValidationError);
  EXPECT_THROW(parse_config("system:\n  masses: [1, -2]\n  radius: 0.1\n"), ValidationError);
  EXPECT_THROW(parse_config("system:\n  masses: [1, 1]\n"), ConfigError);
  EXPECT_THROW(parse_config("system:\n  masses: [1, 1]\n  radius: 0.1\ntolerances:\n"
                            "  tangency_tol: 0\n"),
               ValidationError);
  EXPECT_THROW(parse_config("system:\n  masses: [1, 1]\n  radius: 0.1\nanalysis:\n"
                            "  l0: [2, 4]\n"),
               ConfigError);
  EXPECT_THROW(parse_config("- 1\n- 2\n"), ConfigError);
  EXPECT_THROW(parse_config("system: [\n"), ConfigError);
}

TEST(ParseConfig, SerializeIsCanonicalAndIdempotent) {
  const std::string text = std::string(kMinimal) +
                           "analysis:\n  l0: [1, -2]\n  c0: 0.3\nscan:\n  radii: [0.24, 0.25]\n"
                           "  masses: [[1, 1], [1, 2.5]]\ntolerances:\n  rank_rel_tol: 1e-9\n";
  const auto once = serialize_config(parse_config(text));
  const auto twice = serialize_config(parse_config(once));
  EXPECT_EQ(once, twice);
  const auto c = parse_config(once);
  EXPECT_EQ(c.l0, Lattice2(1, -2));
  EXPECT_EQ(c.c0, 0.3);
  EXPECT_EQ(c.tolerances.rank_rel_tol, 1e-9);
  EXPECT_EQ(c.scan_masses.size(), 2u);
  EXPECT_EQ(c.scan_radii, (std::vector<double>{0.24, 0.25}));
}

TEST(GitBlobHash, KnownObjects) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Run, SimulateIsDeterministic) {
  const auto cfg = parse_config(kMinimal);
  const auto a = run(Subcommand::simulate, cfg);
  const auto b = run(Subcommand::simulate, cfg);
  EXPECT_EQ(summary_text(a), summary_text(b));
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.series_csv, b.series_csv);
}

TEST(Run, SimulateEventCountMatchesCollisionRate) {
  auto cfg = parse_config(kMinimal);
  cfg.t_max = 1000.0;
  const auto out = run(Subcommand::simulate, cfg);
  const auto params = cfg.params();
  const auto traj = simulate(sample_state(cfg.seed, params), cfg.t_max, params);
  EXPECT_EQ(out.summary["events"].get<std::size_t>(), collision_rate(traj).count);
  EXPECT_EQ(out.summary["collision_rate"]["count"].get<std::size_t>(), traj.events.size());
  EXPECT_EQ(out.events.size(), traj.events.size());
  EXPECT_LE(out.summary["conservation"]["max_energy_drift"].get<double>(), 1e-9);
}

TEST(Run, ScanFlagsOnlyTheDegenerateRadius) {
  auto cfg = parse_config(
      "system:\n  masses: [1, 1]\n  radius: 0.1\nrun:\n  t_max: 2\n"
      "analysis:\n  l0: [1, 0]\n  max_group: 2\nscan:\n  radii: [0.24, 0.25, 0.26]\n");
  const auto one = run(Subcommand::scan, cfg, 1);
  const auto three = run(Subcommand::scan, cfg, 3);
  EXPECT_EQ(one.summary["flagged_indices"], nlohmann::ordered_json::array({1}));
  EXPECT_EQ(summary_text(one), summary_text(three));
  ASSERT_EQ(one.summary["points"].size(), 3u);
  EXPECT_EQ(one.summary["points"][1]["flags"]["group_sizes"], nlohmann::ordered_json::array({2}));
}

TEST(Run, OtherSubcommandsProduceSummaries) {
  auto cfg = parse_config(std::string(kMinimal) + "analysis:\n  ensemble: 2\n");
  for (auto s : {Subcommand::neutral, Subcommand::lyapunov, Subcommand::audit,
                 Subcommand::degeneracy}) {
    const auto out = run(s, cfg);
    EXPECT_EQ(out.summary["subcommand"], to_string(s));
    EXPECT_FALSE(out.series_csv.empty());
    EXPECT_EQ(summary_text(out), summary_text(run(s, cfg))) << to_string(s);
  }
}

TEST(Cli, WritesArtifactsAndHonoursEnvOverride) {
  const auto dir = scratch("write");
  {
    std::ofstream f(dir / "c.yaml");
    f << kMinimal;
  }
  ::unsetenv("DISKFLOW_OUT_DIR");
  ASSERT_EQ(invoke({"simulate", "--config", (dir / "c.yaml").string(), "--out",
                    (dir / "a").string()}),
            kExitOk);
  for (const char* f : {"summary.json", "events.jsonl", "series.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }
  const auto summary = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  EXPECT_EQ(summary["subcommand"], "simulate");

  ::setenv("DISKFLOW_OUT_DIR", (dir / "b").string().c_str(), 1);
  ASSERT_EQ(invoke({"simulate", "--config", (dir / "c.yaml").string(), "--out",
                    (dir / "ignored").string()}),
            kExitOk);
  ::unsetenv("DISKFLOW_OUT_DIR");
  EXPECT_FALSE(fs::exists(dir / "ignored"));
  EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  {
    std::ofstream f(dir / "bad.yaml");
    f << "system:\n  masses: [1, 1]\n  raduis: 0.1\n";
    std::ofstream g(dir / "overflow.yaml");
    g << "system:\n  masses: [1, 0.6, 2.2]\n  radius: 0.165\nrun:\n  t_max: 400\n"
         "analysis:\n  ensemble: 1\n";
  }
  ::unsetenv("DISKFLOW_OUT_DIR");
  EXPECT_EQ(invoke({"simulate", "--config", (dir / "bad.yaml").string(), "--out",
                    (dir / "o").string()}),
            kExitValidation);
  EXPECT_EQ(invoke({"simulate", "--config", (dir / "missing.yaml").string()}), kExitValidation);
  EXPECT_EQ(invoke({"frobnicate"}), kExitValidation);
  EXPECT_EQ(invoke({"audit", "--config", (dir / "overflow.yaml").string(), "--out",
                    (dir / "o").string()}),
            kExitNumerical);
}
