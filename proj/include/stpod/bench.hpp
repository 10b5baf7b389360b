#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stpod/io.hpp"
#include "stpod/rom.hpp"

namespace stpod {

/// Everything a batch run needs. Defaults: the benchmark box and point,
/// T = 0.8 with 8 steps, alpha = 0.1, 100 training snapshots, N = 30 and a
/// 20-parameter test set.
struct RunConfig {
  int nx = 20;
  int ny = 20;
  double final_time = 0.8;
  int num_steps = 8;
  TrackingMode tracking = TrackingMode::Replicated;
  double alpha = 0.1;
  ParameterBox box;
  Parameter benchmark = kBenchmarkParameter;

  int n_max = 100;
  std::uint64_t train_seed = 20240501;
  int workers = 1;

  std::vector<int> n_list{6, 10, 16, 20, 26, 30};
  int n_online = 30;
  int test_size = 20;
  std::uint64_t test_seed = 7;

  double newton_tol = 1e-8;
  int newton_max_iter = 25;
  int repetitions = 5;

  std::string output_dir = "stpod_out";

  bool operator==(const RunConfig&) const = default;

  SWEConfig swe_config() const;
  NewtonOptions newton() const;
  ParameterSamplingBox sampling_box() const { return {box, alpha}; }
  /// output_dir, resolved against $STPOD_OUTPUT_ROOT when relative.
  std::filesystem::path output_path() const;
  std::filesystem::path offline_path() const { return output_path() / "offline"; }
  int max_n() const;
};

/// Flat INI sections: [mesh] [time] [problem] [box] [benchmark] [pod]
/// [online] [solver] [output]. Unknown sections or keys are rejected with
/// ConfigError; missing keys keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

/// Mesh, workspace and model built from a config.
class Problem {
public:
  explicit Problem(const RunConfig& config);
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;
  const RunConfig& config() const { return config_; }
  const FEWorkspace& workspace() const { return ws_; }
  const SweModel& model() const { return model_; }

private:
  RunConfig config_;
  FEWorkspace ws_;
  SweModel model_;
};

struct OfflineSummary {
  std::filesystem::path directory;
  std::string manifest_hash;
  int requested = 0;
  int converged = 0;
  std::array<int, 5> stored_modes{};
  std::array<int, 5> ranks{};
  double seconds = 0.0;
};

/// Samples, solves and compresses; writes params.csv, snapshots.csv,
/// eigenvalues_<var>.csv, basis_<var>.bin and manifest.json.
OfflineSummary cmd_offline(const Problem& problem);

struct OfflineArtifacts {
  std::vector<Parameter> params;
  std::array<Mat, 5> bases;
  std::array<Vec, 5> eigenvalues;
  std::string manifest_hash;
  int stored_modes() const;
};
/// Throws MissingArtifacts when the directory or a file is absent, when a
/// basis file does not match its manifest hash, or when the manifest was
/// produced for a different discretization.
OfflineArtifacts load_offline(const Problem& problem);

struct ErrorReport {
  int n = 0;
  int reduced_dimension = 0;
  VariableErrors rom;       // averaged over the test set
  VariableErrors best_fit;  // averaged over the test set
  double mean_rom_seconds = 0.0;
  double mean_hf_seconds = 0.0;
};

struct OnlineReport {
  std::vector<Parameter> test_set;
  std::vector<ErrorReport> by_n;
  std::string manifest_hash;
};

/// ROM against HF over the test set (or `params` when given) for every N
/// of the config. Appends one ledger row per (mu, N) to online_ledger.csv
/// and writes errors.csv. Any failed solve aborts the report.
OnlineReport cmd_online(const Problem& problem, const std::optional<std::vector<Parameter>>& params = std::nullopt);

struct TimingSummary {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};
TimingSummary summarize_timings(std::vector<double> seconds);

struct SpeedupReport {
  int n = 0;
  int repetitions = 0;
  TimingSummary hf;
  TimingSummary rom;
  TimingSummary hf_linear;   // factorization and solve only
  TimingSummary rom_linear;  // dense factorization and solve only
  double speedup = 0.0;         // median HF / median ROM
  double linear_speedup = 0.0;  // same for the linear-solve-only figures
  std::string machine;
};

/// Times HF and ROM solves at the benchmark point. Desired-state generation
/// is excluded from both; the HF time includes its forward-solve initial
/// guess. Writes speedup.csv.
SpeedupReport cmd_speedup(const Problem& problem, int repetitions);

/// One CSV per field group (v, h, u, w, q) per step index (1-based):
/// a comment line with field, t and mu, then x1, x2 and the values.
/// x1 is the physical coordinate mu4 * reference x1.
std::vector<std::filesystem::path> export_fields(const SweModel& model, const OcpSolution& solution,
                                                 const Parameter& mu, const std::vector<int>& step_indices,
                                                 const std::filesystem::path& directory);

/// index, lambda, cumulative energy for every variable in one table.
CsvTable eigenvalue_table(const OfflineArtifacts& artifacts);

std::string machine_description();

}  // namespace stpod
