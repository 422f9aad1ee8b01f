// Experiment driver: dataset generation, training sweeps, stability and
// landscape analyses, and cross-run comparison tables.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "attnlab/blas.hpp"
#include "attnlab/cli.hpp"
#include "attnlab/landscape.hpp"
#include "attnlab/model.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/stability.hpp"
#include "attnlab/tasks.hpp"

using namespace attnlab;

int main(int argc, char** argv) {
  ensure_fast_blas(argv);
  CLI::App app{"attnlab: sparse-attention transformer laboratory"};
  app.require_subcommand(1);

  // gen: write a dataset as TSV + vocab files
  auto* gen = app.add_subcommand("gen", "generate a task dataset");
  std::string gen_task = "even_pairs", gen_out = ".";
  std::size_t gen_len = 40, gen_train = 5000, gen_holdout = 2000,
              gen_min_len = 0;
  std::uint64_t gen_seed = 7;
  gen->add_option("--task", gen_task, "task name")->required();
  gen->add_option("--len", gen_len, "sequence length (max for listops)");
  gen->add_option("--min-len", gen_min_len, "listops minimum length");
  gen->add_option("--train", gen_train, "training set size");
  gen->add_option("--holdout", gen_holdout, "holdout set size");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--out", gen_out, "output directory");

  // train: run a config sweep
  auto* train = app.add_subcommand("train", "train per the config");
  std::string train_config, train_out = "runs";
  std::size_t train_workers = 1;
  train->add_option("--config", train_config, "experiment config JSON")
      ->required();
  train->add_option("--out", train_out, "artifact directory");
  train->add_option("--workers", train_workers, "parallel runs");

  // stability: measure a trained checkpoint
  auto* stab = app.add_subcommand("stability", "dispersion/constants report");
  std::string stab_ckpt, stab_out = "stability";
  std::string stab_task = "even_pairs";
  std::size_t stab_len = 40, stab_n = 5000, stab_k = 5, stab_min_len = 0;
  std::uint64_t stab_seed = 7;
  stab->add_option("--checkpoint", stab_ckpt, "model checkpoint")->required();
  stab->add_option("--task", stab_task, "task name");
  stab->add_option("--len", stab_len, "sequence length");
  stab->add_option("--min-len", stab_min_len, "listops minimum length");
  stab->add_option("--n", stab_n, "instances to sweep");
  stab->add_option("--seed", stab_seed, "dataset seed");
  stab->add_option("--k", stab_k, "heavy-hitter k");
  stab->add_option("--out", stab_out, "output path base");

  // landscape: loss surface + Lipschitz estimates for a checkpoint
  auto* land = app.add_subcommand("landscape", "loss surface scan");
  std::string land_ckpt, land_out = "landscape";
  std::string land_task = "even_pairs";
  std::size_t land_len = 40, land_n = 2000, land_min_len = 0, land_workers = 1;
  std::uint64_t land_seed = 7, land_dir_seed = 1;
  double land_step = 0.05, land_range = 1.0;
  land->add_option("--checkpoint", land_ckpt, "model checkpoint")->required();
  land->add_option("--task", land_task, "task name");
  land->add_option("--len", land_len, "sequence length");
  land->add_option("--min-len", land_min_len, "listops minimum length");
  land->add_option("--n", land_n, "training instances for the loss");
  land->add_option("--seed", land_seed, "dataset seed");
  land->add_option("--dir-seed", land_dir_seed, "direction seed");
  land->add_option("--grid-step", land_step, "grid step (epsilon)");
  land->add_option("--grid-range", land_range, "grid range r in (0,1]");
  land->add_option("--workers", land_workers, "parallel cell evaluators");
  land->add_option("--out", land_out, "output path base");

  // compare: aggregate run directories
  auto* cmp = app.add_subcommand("compare", "aggregate runs across seeds");
  std::vector<std::string> cmp_dirs;
  std::string cmp_out = "comparison";
  cmp->add_option("dirs", cmp_dirs, "run directories")->required();
  cmp->add_option("--out", cmp_out, "output path base");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      std::filesystem::create_directories(gen_out);
      const Dataset ds = make_dataset(gen_task, gen_len, gen_train,
                                      gen_holdout, gen_seed, gen_min_len);
      save_dataset(ds, gen_out);
      std::printf("wrote %zu train / %zu holdout instances to %s\n",
                  ds.train.size(), ds.holdout.size(), gen_out.c_str());
    } else if (*train) {
      const auto cfg = ExperimentConfig::load(train_config);
      const auto result = run_experiment(cfg, train_out, train_workers);
      std::printf("%s: %zu artifacts in %s\n",
                  result.ok ? "ok" : "error", result.artifacts.size(),
                  result.out_dir.c_str());
      if (!result.ok) return 1;
    } else if (*stab) {
      Model model = load_checkpoint(stab_ckpt);
      const Dataset ds = make_dataset(stab_task, stab_len, stab_n, 1,
                                      stab_seed, stab_min_len);
      const auto rep = stability_report(model, ds.train, stab_k);
      write_stability_report(rep, stab_out + ".json", stab_out + ".csv");
      std::printf("stability report: %s.json\n", stab_out.c_str());
    } else if (*land) {
      Model model = load_checkpoint(land_ckpt);
      const Dataset ds = make_dataset(land_task, land_len, land_n, 1,
                                      land_seed, land_min_len);
      auto params = model.named_params();
      const auto d1 = sample_direction(params, derive_seed(land_dir_seed, 101));
      const auto d2 = sample_direction(params, derive_seed(land_dir_seed, 102));
      const auto grid =
          scan(snapshot_params(params), d1, d2, land_step, land_range,
               model_loss_factory(model, ds.train), land_workers);
      write_grid_csv(grid, land_out + "_grid.csv");
      write_grid_svg(grid, land_out + "_grid.svg");
      const auto est = lipschitz_estimates(grid, d1, d2);
      std::vector<double> radii;
      for (double r = 0.1; r <= land_range + 1e-12; r += 0.1)
        radii.push_back(r);
      write_curves_csv(percentile_curves(est, radii),
                       land_out + "_lipschitz.csv");
      std::printf("landscape grid: %s_grid.csv\n", land_out.c_str());
    } else if (*cmp) {
      const auto rows = compare_runs(cmp_dirs);
      write_comparison(rows, cmp_out);
      std::printf("comparison: %s.csv (%zu mask variants)\n", cmp_out.c_str(),
                  rows.size());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
