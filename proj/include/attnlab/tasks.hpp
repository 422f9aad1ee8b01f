#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnlab {

struct TaskInstance {
  std::vector<int> tokens;
  int label = 0;
};

struct TaskSpec {
  std::string name;
  std::vector<std::string> vocab;  // token string for each id
  std::size_t length = 0;          // every instance has exactly this length
  std::size_t num_classes = 0;

  int token_id(const std::string& tok) const;
};

struct Dataset {
  TaskSpec spec;
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> holdout;
};

// Per-task generators. Each is a pure function of its arguments; instances
// come from a single seeded stream.
std::vector<TaskInstance> gen_parity(std::size_t n, std::size_t len,
                                     std::uint64_t seed);
std::vector<TaskInstance> gen_even_pairs(std::size_t n, std::size_t len,
                                         std::uint64_t seed);
std::vector<TaskInstance> gen_missing_duplicates(std::size_t n,
                                                 std::size_t len,
                                                 std::uint64_t seed);
std::vector<TaskInstance> gen_cycle_navigation(std::size_t n, std::size_t len,
                                               std::uint64_t seed);
std::vector<TaskInstance> gen_stack_manipulation(std::size_t n,
                                                 std::size_t len,
                                                 std::uint64_t seed);
std::vector<TaskInstance> gen_modular_arithmetic(std::size_t n,
                                                 std::size_t len,
                                                 std::uint64_t seed);
std::vector<TaskInstance> gen_solve_equation(std::size_t n, std::size_t len,
                                             std::uint64_t seed);
// ListOps instances are padded to max_len; token length before padding lies
// in [min_len, max_len].
std::vector<TaskInstance> gen_listops(std::size_t n, std::size_t min_len,
                                      std::size_t max_len, std::uint64_t seed);

TaskSpec task_spec(const std::string& name, std::size_t len);

// Independent evaluator for a generated instance; recomputes the label from
// the token sequence alone. This is the oracle every generator is checked
// against.
int task_oracle(const TaskSpec& spec, const TaskInstance& inst);

// Known task names, in canonical order.
const std::vector<std::string>& task_names();

// Builds train/holdout from disjoint seeded streams. For listops, `len` is
// the maximum length and `min_len` bounds generation from below.
Dataset make_dataset(const std::string& name, std::size_t len,
                     std::size_t train_n, std::size_t holdout_n,
                     std::uint64_t seed, std::size_t listops_min_len = 0);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& name, const std::string& dir);

}  // namespace attnlab
