#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnlab/model.hpp"
#include "attnlab/training.hpp"

namespace attnlab {

// Everything needed to reproduce an experiment: task, architecture, masks,
// optimization, seeds, and analysis toggles. Serializes to human-editable
// JSON; parse(serialize(c)) round-trips exactly.
struct ExperimentConfig {
  // task
  std::string task = "even_pairs";
  std::size_t seq_len = 40;
  std::size_t listops_min_len = 0;  // 0: derived from seq_len
  std::size_t train_size = 5000;
  std::size_t holdout_size = 2000;
  std::uint64_t data_seed = 7;

  // model
  std::size_t d = 64;
  std::size_t d_mlp = 64;
  std::size_t blocks = 5;
  std::size_t heads = 1;
  std::string activation = "relu";
  double dropout = 0.01;
  double ln_eps = 1e-5;

  // masks and seeds swept by one run invocation
  std::vector<std::string> masks = {"full"};
  std::vector<std::uint64_t> seeds = {1};

  // optimization
  std::string optimizer = "sgd";
  double lr0 = 0.1;
  double decay = 0.9995;
  std::size_t epochs = 100;
  std::size_t batch = 32;

  // analysis toggles
  bool run_stability = false;
  bool run_landscape = false;
  std::size_t stability_k = 5;
  double grid_step = 0.05;
  double grid_range = 1.0;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string hash() const;  // FNV-1a of the canonical serialization

  ModelConfig model_config(const std::string& mask) const;
  TrainConfig train_config(std::uint64_t seed) const;
};

struct RunArtifact {
  std::string mask;
  std::uint64_t seed = 0;
  std::string runlog_csv;
  std::string summary_json;
  std::string init_checkpoint;
  std::string final_checkpoint;
  bool diverged = false;
};

struct RunResult {
  std::string out_dir;
  std::vector<RunArtifact> artifacts;
  bool ok = true;
};

// Trains every (mask, seed) pair, emitting RunLog CSVs, summaries,
// checkpoints, optional stability/landscape artifacts, and a manifest tying
// everything to the config hash. Returns ok = false after divergence or
// mid-run failure (partial artifacts plus an error manifest are written).
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                         std::size_t workers = 1);

// Aggregates summaries across seeds per mask variant into a comparison
// table; writes CSV + JSON into `out_path` (.csv / .json appended).
struct ComparisonRow {
  std::string mask;
  std::size_t seeds = 0;
  double best_holdout_mean = 0.0, best_holdout_std = 0.0;
  double final_holdout_mean = 0.0, final_holdout_std = 0.0;
  std::size_t converged_runs = 0;  // runs that reached 95% train accuracy
  double epochs_to_95_mean = 0.0, epochs_to_95_std = 0.0;
};
std::vector<ComparisonRow> compare_runs(const std::vector<std::string>& dirs);
void write_comparison(const std::vector<ComparisonRow>& rows,
                      const std::string& out_base);

}  // namespace attnlab
