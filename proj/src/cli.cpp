#include "attnlab/cli.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "attnlab/landscape.hpp"
#include "attnlab/numeric.hpp"
#include "attnlab/stability.hpp"
#include "attnlab/tasks.hpp"

namespace attnlab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string ExperimentConfig::to_json() const {
  json j;
  j["task"] = {{"name", task},
               {"seq_len", seq_len},
               {"listops_min_len", listops_min_len},
               {"train_size", train_size},
               {"holdout_size", holdout_size},
               {"data_seed", data_seed}};
  j["model"] = {{"d", d},
                {"d_mlp", d_mlp},
                {"blocks", blocks},
                {"heads", heads},
                {"activation", activation},
                {"dropout", dropout},
                {"ln_eps", ln_eps}};
  j["masks"] = masks;
  j["seeds"] = seeds;
  j["train"] = {{"optimizer", optimizer},
                {"lr0", lr0},
                {"decay", decay},
                {"epochs", epochs},
                {"batch", batch}};
  j["analysis"] = {{"stability", run_stability},
                   {"landscape", run_landscape},
                   {"stability_k", stability_k},
                   {"grid_step", grid_step},
                   {"grid_range", grid_range}};
  return j.dump(1);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  try {
    const auto& t = j.at("task");
    c.task = t.at("name");
    c.seq_len = t.at("seq_len");
    c.listops_min_len = t.value("listops_min_len", 0);
    c.train_size = t.at("train_size");
    c.holdout_size = t.at("holdout_size");
    c.data_seed = t.at("data_seed");
    const auto& m = j.at("model");
    c.d = m.at("d");
    c.d_mlp = m.at("d_mlp");
    c.blocks = m.at("blocks");
    c.heads = m.at("heads");
    c.activation = m.at("activation");
    c.dropout = m.at("dropout");
    c.ln_eps = m.at("ln_eps");
    c.masks = j.at("masks").get<std::vector<std::string>>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    const auto& tr = j.at("train");
    c.optimizer = tr.at("optimizer");
    c.lr0 = tr.at("lr0");
    c.decay = tr.at("decay");
    c.epochs = tr.at("epochs");
    c.batch = tr.at("batch");
    const auto& a = j.at("analysis");
    c.run_stability = a.at("stability");
    c.run_landscape = a.at("landscape");
    c.stability_k = a.at("stability_k");
    c.grid_step = a.at("grid_step");
    c.grid_range = a.at("grid_range");
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config field error: ") + e.what());
  }
  // validation happens eagerly so a bad config fails before any work
  for (const auto& m : c.masks) MaskSpec::parse(m);
  activation_from_string(c.activation);
  optimizer_from_string(c.optimizer);
  task_spec(c.task, c.seq_len == 0 ? 8 : c.seq_len);
  if (c.lr0 <= 0.0) throw std::invalid_argument("config: lr0 must be > 0");
  if (c.decay <= 0.0 || c.decay > 1.0)
    throw std::invalid_argument("config: decay must be in (0, 1]");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string ExperimentConfig::hash() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json())));
  return buf;
}

ModelConfig ExperimentConfig::model_config(const std::string& mask) const {
  const TaskSpec spec = task_spec(task, seq_len);
  ModelConfig mc;
  mc.d = d;
  mc.d_mlp = d_mlp;
  mc.blocks = blocks;
  mc.heads = heads;
  mc.seq_len = seq_len;
  mc.vocab = spec.vocab.size();
  mc.classes = spec.num_classes;
  mc.act = activation_from_string(activation);
  mc.mask = MaskSpec::parse(mask);
  mc.dropout = dropout;
  mc.ln_eps = ln_eps;
  return mc;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  TrainConfig tc;
  tc.optimizer = optimizer_from_string(optimizer);
  tc.lr0 = lr0;
  tc.decay = decay;
  tc.epochs = epochs;
  tc.batch = batch;
  tc.seed = seed;
  return tc;
}

namespace {

std::string sanitize(const std::string& mask) {
  std::string out = mask;
  for (char& c : out)
    if (c == ':' || c == '+') c = '_';
  return out;
}

json summary_json(const ExperimentConfig& cfg, const std::string& mask,
                  std::uint64_t seed, const RunLog& log) {
  json j;
  j["config_hash"] = cfg.hash();
  j["mask"] = mask;
  j["seed"] = seed;
  j["epochs_run"] = log.rows.size() - 1;
  if (log.epochs_to_95pct_train)
    j["epochs_to_95pct_train"] = *log.epochs_to_95pct_train;
  else
    j["epochs_to_95pct_train"] = nullptr;
  j["best_holdout"] = log.best_holdout;
  j["best_epoch"] = log.best_epoch;
  j["final_holdout"] = log.final_holdout;
  j["final_train_acc"] = log.rows.back().train_acc;
  j["final_train_ce"] = log.rows.back().train_ce;
  j["diverged"] = log.diverged;
  if (log.diverged) j["divergence_message"] = log.divergence_message;
  j["effective_config"] = json::parse(cfg.to_json());
  return j;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::string& out_dir, std::size_t workers) {
  RunResult result;
  result.out_dir = out_dir;
  fs::create_directories(out_dir);

  const Dataset data =
      make_dataset(cfg.task, cfg.seq_len, cfg.train_size, cfg.holdout_size,
                   cfg.data_seed, cfg.listops_min_len);

  // one shared initial core checkpoint per seed: every mask variant of that
  // seed starts from the same parameters
  for (std::uint64_t seed : cfg.seeds) {
    Model init(cfg.model_config("full"), seed);
    save_checkpoint(init,
                    out_dir + "/init_seed" + std::to_string(seed) + ".json");
  }

  struct Job {
    std::string mask;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& mask : cfg.masks)
    for (std::uint64_t seed : cfg.seeds) jobs.push_back({mask, seed});

  std::vector<RunArtifact> artifacts(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= jobs.size()) break;
      const auto& job = jobs[idx];
      RunArtifact art;
      art.mask = job.mask;
      art.seed = job.seed;
      const std::string tag =
          sanitize(job.mask) + "_seed" + std::to_string(job.seed);
      try {
        Model model(cfg.model_config(job.mask), job.seed);
        RunLog log = train_run(model, data, cfg.train_config(job.seed));
        art.runlog_csv = out_dir + "/runlog_" + tag + ".csv";
        write_runlog_csv(log, art.runlog_csv);
        art.summary_json = out_dir + "/summary_" + tag + ".json";
        {
          std::ofstream out(art.summary_json);
          out << summary_json(cfg, job.mask, job.seed, log).dump(1) << "\n";
        }
        art.init_checkpoint =
            out_dir + "/init_seed" + std::to_string(job.seed) + ".json";
        art.final_checkpoint = out_dir + "/checkpoint_" + tag + ".json";
        save_checkpoint(model, art.final_checkpoint);
        art.diverged = log.diverged;
        if (log.diverged) errors[idx] = log.divergence_message;

        if (cfg.run_stability && !log.diverged) {
          auto rep = stability_report(model, data.train, cfg.stability_k);
          write_stability_report(rep, out_dir + "/stability_" + tag + ".json",
                                 out_dir + "/stability_" + tag + ".csv");
        }
        if (cfg.run_landscape && !log.diverged) {
          auto params = model.named_params();
          const auto d1 = sample_direction(params, derive_seed(job.seed, 101));
          const auto d2 = sample_direction(params, derive_seed(job.seed, 102));
          auto grid = scan(snapshot_params(params), d1, d2, cfg.grid_step,
                           cfg.grid_range, model_loss_factory(model, data.train),
                           1);
          write_grid_csv(grid, out_dir + "/landscape_" + tag + ".csv");
          write_grid_svg(grid, out_dir + "/landscape_" + tag + ".svg");
          const auto est = lipschitz_estimates(grid, d1, d2);
          std::vector<double> radii;
          for (double r = 0.1; r <= cfg.grid_range + 1e-12; r += 0.1)
            radii.push_back(r);
          write_curves_csv(percentile_curves(est, radii),
                           out_dir + "/lipschitz_" + tag + ".csv");
        }
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
      artifacts[idx] = std::move(art);
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  json manifest;
  manifest["config_hash"] = cfg.hash();
  manifest["config"] = json::parse(cfg.to_json());
  auto arr = json::array();
  bool ok = true;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    json a;
    a["mask"] = artifacts[i].mask;
    a["seed"] = artifacts[i].seed;
    a["runlog_csv"] = artifacts[i].runlog_csv;
    a["summary_json"] = artifacts[i].summary_json;
    a["init_checkpoint"] = artifacts[i].init_checkpoint;
    a["final_checkpoint"] = artifacts[i].final_checkpoint;
    a["diverged"] = artifacts[i].diverged;
    if (!errors[i].empty()) {
      a["error"] = errors[i];
      ok = false;
    }
    arr.push_back(a);
  }
  manifest["artifacts"] = arr;
  manifest["status"] = ok ? "ok" : "error";
  {
    std::ofstream out(out_dir + "/manifest.json");
    out << manifest.dump(1) << "\n";
  }
  result.artifacts = std::move(artifacts);
  result.ok = ok;
  return result;
}

std::vector<ComparisonRow> compare_runs(const std::vector<std::string>& dirs) {
  struct Agg {
    std::vector<double> best, final_h, to95;
    std::size_t runs = 0;
  };
  std::vector<std::string> mask_order;
  std::map<std::string, Agg> by_mask;
  for (const auto& dir : dirs) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::invalid_argument("compare: no manifest in " + dir);
    nlohmann::json manifest;
    in >> manifest;
    for (const auto& art : manifest.at("artifacts")) {
      std::ifstream sf(art.at("summary_json").get<std::string>());
      if (!sf) continue;
      nlohmann::json s;
      sf >> s;
      const std::string mask = s.at("mask");
      if (!by_mask.count(mask)) mask_order.push_back(mask);
      auto& agg = by_mask[mask];
      agg.runs += 1;
      agg.best.push_back(s.at("best_holdout").get<double>());
      agg.final_h.push_back(s.at("final_holdout").get<double>());
      if (!s.at("epochs_to_95pct_train").is_null())
        agg.to95.push_back(s.at("epochs_to_95pct_train").get<double>());
    }
  }
  std::vector<ComparisonRow> rows;
  for (const auto& mask : mask_order) {
    const auto& agg = by_mask[mask];
    ComparisonRow row;
    row.mask = mask;
    row.seeds = agg.runs;
    row.best_holdout_mean = mean_of(agg.best);
    row.best_holdout_std = stddev_of(agg.best);
    row.final_holdout_mean = mean_of(agg.final_h);
    row.final_holdout_std = stddev_of(agg.final_h);
    row.converged_runs = agg.to95.size();
    if (!agg.to95.empty()) {
      row.epochs_to_95_mean = mean_of(agg.to95);
      row.epochs_to_95_std = stddev_of(agg.to95);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_comparison(const std::vector<ComparisonRow>& rows,
                      const std::string& out_base) {
  {
    std::ofstream csv(out_base + ".csv");
    if (!csv) throw std::runtime_error("cannot write " + out_base + ".csv");
    csv << "mask,seeds,best_holdout_mean,best_holdout_std,final_holdout_mean,"
           "final_holdout_std,converged_runs,epochs_to_95_mean,epochs_to_95_"
           "std\n";
    char line[320];
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line,
                    "%s,%zu,%.6g,%.6g,%.6g,%.6g,%zu,%.6g,%.6g\n",
                    r.mask.c_str(), r.seeds, r.best_holdout_mean,
                    r.best_holdout_std, r.final_holdout_mean,
                    r.final_holdout_std, r.converged_runs, r.epochs_to_95_mean,
                    r.epochs_to_95_std);
      csv << line;
    }
  }
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"mask", r.mask},
                 {"seeds", r.seeds},
                 {"best_holdout", {{"mean", r.best_holdout_mean}, {"std", r.best_holdout_std}}},
                 {"final_holdout", {{"mean", r.final_holdout_mean}, {"std", r.final_holdout_std}}},
                 {"converged_runs", r.converged_runs},
                 {"epochs_to_95", {{"mean", r.epochs_to_95_mean}, {"std", r.epochs_to_95_std}}}});
  }
  std::ofstream out(out_base + ".json");
  if (!out) throw std::runtime_error("cannot write " + out_base + ".json");
  out << j.dump(1) << "\n";
}

}  // namespace attnlab
