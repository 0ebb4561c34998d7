#pragma once

// Experiment front-end: YAML configuration, subcommands and their artifacts.

#include "diskflow/core_model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace diskflow {

struct ExperimentConfig {
  // system
  std::vector<double> masses;
  double radius = 0.0;
  // run
  std::uint64_t seed = 1;
  double t_max = 100.0;
  // tolerances
  Tolerances tolerances;
  // analysis
  double c0 = 1.0;
  Lattice2 l0 = Lattice2(1, 0);
  double delta0 = 0.1;
  double horizon = 100.0;
  int ensemble = 10;
  int reorth_interval = 10;
  int per_flight = 4;
  int max_group = 4;
  int neutral_collisions = 4;  // collisions inside the neutral-space window
  // scan; empty lists fall back to the system values
  std::vector<std::vector<double>> scan_masses;
  std::vector<double> scan_radii;

  SystemParams params() const { return SystemParams(masses, radius, tolerances); }
};

// Parses the YAML grammar documented in the README. Throws ConfigError naming
// unknown keys, and with the line number on type mismatches; ValidationError
// when the system fails validate_params.
ExperimentConfig parse_config(std::string_view text);

// Canonical normal form: every key in fixed order, doubles as %.17g.
std::string serialize_config(const ExperimentConfig& cfg);

enum class Subcommand { simulate, neutral, lyapunov, audit, degeneracy, scan };

const char* to_string(Subcommand s);
// Throws UsageError on unknown names.
Subcommand parse_subcommand(std::string_view name);

struct RunOutput {
  nlohmann::ordered_json summary;
  std::vector<std::string> events;  // one JSON document per line
  std::string series_csv;
};

// Deterministic in (subcommand, config); `threads` only affects scan scheduling.
RunOutput run(Subcommand sub, const ExperimentConfig& cfg, int threads = 1);

// Writes summary.json, events.jsonl and series.csv into dir (created if needed).
void write_outputs(const RunOutput& out, const std::filesystem::path& dir);

std::string summary_text(const RunOutput& out);

// Git blob object id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_hash(std::string_view content);

// Exit codes of the command-line tool.
constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

// Full command-line entry point; returns the exit code.
int cli_main(int argc, char** argv);

}  // namespace diskflow
