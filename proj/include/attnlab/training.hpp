#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnlab/model.hpp"
#include "attnlab/tasks.hpp"

namespace attnlab {

// Raised when a step or run encounters non-finite values; carries the
// diagnostic in what().
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double lr0 = 0.1;
  double decay = 0.9995;  // per-epoch StepLR factor
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct EpochMetrics {
  double train_ce = 0.0;
  double train_acc = 0.0;
  double holdout_acc = 0.0;
  double lr = 0.0;
};

struct RunLog {
  // row 0 holds the pre-training metrics; row e the metrics after epoch e
  std::vector<EpochMetrics> rows;
  std::optional<std::size_t> epochs_to_95pct_train;
  double best_holdout = 0.0;
  std::size_t best_epoch = 0;
  double final_holdout = 0.0;
  bool diverged = false;
  std::string divergence_message;
};

// One SGD step over the given parameters: theta -= lr * grad.
void sgd_step(std::vector<std::pair<std::string, Tensor>>& params, double lr);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

double step_lr(double lr0, double gamma, std::size_t epoch);

// Mean CE and accuracy over a set of instances, evaluation mode.
std::pair<double, double> evaluate(Model& model,
                                   const std::vector<TaskInstance>& insts,
                                   std::size_t chunk = 256);

// Full ERM run; mutates the model in place. Divergence is reported in the
// returned log rather than thrown.
RunLog train_run(Model& model, const Dataset& data, const TrainConfig& cfg);

std::string runlog_to_csv(const RunLog& log);
void write_runlog_csv(const RunLog& log, const std::string& path);

}  // namespace attnlab
