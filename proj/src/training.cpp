#include "attnlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "attnlab/blas.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

void sgd_step(std::vector<std::pair<std::string, Tensor>>& params, double lr) {
  for (auto& [name, p] : params) {
    if (!p.has_grad())
      throw std::logic_error("sgd_step: gradient not populated for " + name);
    const auto& g = p.grad();
    for (double gv : g) {
      if (!std::isfinite(gv))
        throw DivergenceError("sgd_step: non-finite gradient in " + name);
    }
    auto& v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.size(), 0.0);
      state.v[i].assign(params[i].second.size(), 0.0);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    if (!p.has_grad())
      throw std::logic_error("adam_step: gradient not populated for " + name);
    const auto& g = p.grad();
    auto& m = state.m[i];
    auto& v = p.values();
    auto& vv = state.v[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!std::isfinite(g[j]))
        throw DivergenceError("adam_step: non-finite gradient in " + name);
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      vv[j] = beta2 * vv[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = vv[j] / bc2;
      v[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double step_lr(double lr0, double gamma, std::size_t epoch) {
  if (lr0 <= 0.0) throw std::invalid_argument("step_lr: lr0 must be > 0");
  if (gamma <= 0.0 || gamma > 1.0)
    throw std::invalid_argument("step_lr: gamma must be in (0, 1]");
  return lr0 * std::pow(gamma, static_cast<double>(epoch));
}

namespace {

int argmax_col(const Tensor& logits, std::size_t col) {
  const std::size_t y = logits.rows();
  const std::size_t n = logits.cols();
  int best = 0;
  double bv = logits.values()[col];
  for (std::size_t j = 1; j < y; ++j) {
    const double v = logits.values()[j * n + col];
    if (v > bv) {
      bv = v;
      best = static_cast<int>(j);
    }
  }
  return best;
}

// Evaluation-mode forward pass over a chunk with caller-owned buffers; no
// tape and no per-call allocation. Numerically identical to forward_batch
// in eval mode: same gemm shapes, same softmax and LayerNorm loops.
struct EvalWorkspace {
  std::vector<double> x, attn, tmp, u, y, xt, h, m2, z, logits;
  std::vector<double> xb, ub, ab, ob, dmat, smcol, ln_mu, ln_inv;

  void resize(std::size_t d, std::size_t d_mlp, std::size_t li,
              std::size_t classes, std::size_t chunk) {
    const std::size_t n = chunk * li;
    x.resize(d * n);
    attn.resize(d * n);
    tmp.resize(d * n);
    u.resize(d * n);
    y.resize(d * n);
    xt.resize(d * n);
    h.resize(d_mlp * n);
    m2.resize(d * n);
    z.resize(d * chunk);
    logits.resize(classes * chunk);
    xb.resize(d * li);
    ub.resize(d * li);
    ab.resize(li * li);
    ob.resize(d * li);
    dmat.resize(li * li);
    smcol.resize(classes);
  }
};

void layer_norm_raw(const double* in, std::size_t d, std::size_t n,
                    double eps, double* out, std::vector<double>& mu,
                    std::vector<double>& inv_s) {
  mu.assign(n, 0.0);
  inv_s.assign(n, 0.0);
  const double dd = static_cast<double>(d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < n; ++c) mu[c] += in[r * n + c];
  for (std::size_t c = 0; c < n; ++c) mu[c] /= dd;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double t = in[r * n + c] - mu[c];
      inv_s[c] += t * t;
    }
  for (std::size_t c = 0; c < n; ++c)
    inv_s[c] = 1.0 / std::sqrt(eps + inv_s[c] / dd);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out[r * n + c] = (in[r * n + c] - mu[c]) * inv_s[c];
}

void eval_chunk(Model& model, const TaskInstance* const* insts,
                std::size_t take, EvalWorkspace& ws, double& ce_sum,
                std::size_t& correct) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const std::size_t d = cfg.d;
  const std::size_t L = cfg.seq_len;
  const std::size_t li = cfg.internal_len();
  const std::size_t g = cfg.mask.globals;
  const std::size_t n = take * li;
  const double* tv = p.T.values().data();
  const double* ev = model.position_encodings().values().data();
  const double* gv = g > 0 ? p.global.values().data() : nullptr;

  for (std::size_t b = 0; b < take; ++b) {
    const auto& toks = insts[b]->tokens;
    if (toks.size() != L)
      throw std::invalid_argument("evaluate: sequence length mismatch");
    for (std::size_t i = 0; i < L; ++i) {
      const int v = toks[i];
      if (v < 0 || static_cast<std::size_t>(v) >= cfg.vocab)
        throw std::out_of_range("evaluate: token id outside vocabulary");
      for (std::size_t r = 0; r < d; ++r)
        ws.x[r * n + b * li + i] =
            tv[r * cfg.vocab + static_cast<std::size_t>(v)] + ev[r * L + i];
    }
    for (std::size_t j = 0; j < g; ++j)
      for (std::size_t r = 0; r < d; ++r)
        ws.x[r * n + b * li + L + j] = gv[r * g + j];
  }

  AttnMask static_mask;
  if (!cfg.mask.input_dependent()) static_mask = mask_for_spec(cfg.mask, li);
  AttnMask sample_mask;

  for (const auto& blk : p.blocks) {
    std::fill(ws.attn.begin(), ws.attn.begin() + d * n, 0.0);
    for (std::size_t hd = 0; hd < blk.heads.size(); ++hd) {
      const auto& head = blk.heads[hd];
      gemm(false, false, d, n, d, 1.0, head.W.values().data(), d, ws.x.data(),
           n, 0.0, ws.u.data(), n);
      gemm(false, false, d, n, d, 1.0, head.V.values().data(), d, ws.x.data(),
           n, 0.0, ws.y.data(), n);
      double* head_out = blk.heads.size() == 1 ? ws.attn.data() : ws.tmp.data();
      for (std::size_t b = 0; b < take; ++b) {
        for (std::size_t r = 0; r < d; ++r) {
          std::copy_n(ws.x.data() + r * n + b * li, li, ws.xb.data() + r * li);
          std::copy_n(ws.u.data() + r * n + b * li, li, ws.ub.data() + r * li);
        }
        gemm(true, false, li, li, d, 1.0, ws.xb.data(), li, ws.ub.data(), li,
             0.0, ws.dmat.data(), li);
        const AttnMask* mask = &static_mask;
        if (cfg.mask.input_dependent()) {
          topk_mask_into(ws.dmat.data(), li, li, cfg.mask.param, sample_mask);
          mask = &sample_mask;
        }
        masked_softmax_raw(ws.dmat.data(), *mask, li, ws.ab.data());
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(ws.y.data() + r * n + b * li, li, ws.ub.data() + r * li);
        gemm(false, false, d, li, li, 1.0, ws.ub.data(), li, ws.ab.data(), li,
             0.0, ws.ob.data(), li);
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(ws.ob.data() + r * li, li, head_out + r * n + b * li);
      }
      if (blk.heads.size() > 1) {
        if (head.H)
          gemm(false, false, d, n, d, 1.0, head.H.values().data(), d,
               ws.tmp.data(), n, 1.0, ws.attn.data(), n);
        else
          for (std::size_t i = 0; i < d * n; ++i) ws.attn[i] += ws.tmp[i];
      }
    }
    for (std::size_t i = 0; i < d * n; ++i) ws.attn[i] += ws.x[i];
    layer_norm_raw(ws.attn.data(), d, n, cfg.ln_eps, ws.xt.data(), ws.ln_mu, ws.ln_inv);
    gemm(false, false, cfg.d_mlp, n, d, 1.0, blk.P.values().data(), d,
         ws.xt.data(), n, 0.0, ws.h.data(), n);
    for (std::size_t i = 0; i < cfg.d_mlp * n; ++i)
      ws.h[i] = activation_value(cfg.act, ws.h[i]);
    gemm(true, false, d, n, cfg.d_mlp, 1.0, blk.R.values().data(), d,
         ws.h.data(), n, 0.0, ws.m2.data(), n);
    for (std::size_t i = 0; i < d * n; ++i) ws.m2[i] += ws.xt[i];
    layer_norm_raw(ws.m2.data(), d, n, cfg.ln_eps, ws.x.data(), ws.ln_mu, ws.ln_inv);
  }

  // mean over the original L positions, then the readout
  const double inv_l = 1.0 / static_cast<double>(L);
  std::fill(ws.z.begin(), ws.z.begin() + d * take, 0.0);
  for (std::size_t b = 0; b < take; ++b)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t r = 0; r < d; ++r)
        ws.z[r * take + b] += ws.x[r * n + b * li + i] * inv_l;
  const std::size_t classes = cfg.classes;
  gemm(false, false, classes, take, d, 1.0, p.Phi.values().data(), d,
       ws.z.data(), take, 0.0, ws.logits.data(), take);

  for (std::size_t b = 0; b < take; ++b) {
    const int label = insts[b]->label;
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw std::out_of_range("evaluate: label out of range");
    double zmax = ws.logits[b];
    int best = 0;
    for (std::size_t j = 1; j < classes; ++j) {
      const double v = ws.logits[j * take + b];
      if (v > zmax) {
        zmax = v;
        best = static_cast<int>(j);
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < classes; ++j)
      total += std::exp(ws.logits[j * take + b] - zmax);
    ce_sum += zmax + std::log(total) -
              ws.logits[static_cast<std::size_t>(label) * take + b];
    correct += best == label;
  }
}

}  // namespace

std::pair<double, double> evaluate(Model& model,
                                   const std::vector<TaskInstance>& insts,
                                   std::size_t chunk) {
  const auto& cfg = model.config();
  EvalWorkspace ws;
  double ce = 0.0;
  std::size_t correct = 0;
  std::size_t done = 0;
  std::vector<const TaskInstance*> ptrs;
  while (done < insts.size()) {
    const std::size_t take = std::min(chunk, insts.size() - done);
    ws.resize(cfg.d, cfg.d_mlp, cfg.internal_len(), cfg.classes, take);
    ptrs.resize(take);
    for (std::size_t i = 0; i < take; ++i) ptrs[i] = &insts[done + i];
    eval_chunk(model, ptrs.data(), take, ws, ce, correct);
    done += take;
  }
  const auto n = static_cast<double>(insts.size());
  return {ce / n, static_cast<double>(correct) / n};
}

RunLog train_run(Model& model, const Dataset& data, const TrainConfig& cfg) {
  if (cfg.batch == 0) throw std::invalid_argument("train: batch must be >= 1");
  RunLog log;
  auto params = model.named_params();
  AdamState adam;
  Rng dropout_rng(derive_seed(cfg.seed, 0xD0));

  auto [init_ce, init_acc] = evaluate(model, data.train);
  auto [h_ce0, init_hacc] = evaluate(model, data.holdout);
  log.rows.push_back({init_ce, init_acc, init_hacc, step_lr(cfg.lr0, cfg.decay, 0)});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = step_lr(cfg.lr0, cfg.decay, epoch);

    // shuffle order is a pure function of (seed, epoch)
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5E0000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

    double epoch_ce = 0.0;
    std::size_t epoch_correct = 0;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size() && !diverged;
         start += cfg.batch) {
      const std::size_t take = std::min(cfg.batch, order.size() - start);
      std::vector<const std::vector<int>*> seqs(take);
      std::vector<int> labels(take);
      for (std::size_t i = 0; i < take; ++i) {
        const auto idx = order[start + i];
        seqs[i] = &data.train[idx].tokens;
        labels[i] = data.train[idx].label;
      }
      GradTape tape;
      Tensor logits = model.forward_batch(seqs, &tape, &dropout_rng);
      Tensor loss = cross_entropy_mean(&tape, logits, labels);
      if (!std::isfinite(loss.item())) {
        log.diverged = true;
        log.divergence_message =
            "non-finite training loss at epoch " + std::to_string(epoch + 1);
        diverged = true;
        break;
      }
      epoch_ce += loss.item() * static_cast<double>(take);
      for (std::size_t i = 0; i < take; ++i)
        epoch_correct += argmax_col(logits, i) == labels[i];

      for (auto& [name, p] : params) p.zero_grad();
      tape.backward(loss);
      try {
        if (cfg.optimizer == OptimizerKind::kSgd) {
          sgd_step(params, lr);
        } else {
          adam_step(params, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        }
      } catch (const DivergenceError& e) {
        log.diverged = true;
        log.divergence_message = e.what();
        diverged = true;
      }
    }
    if (diverged) break;

    const auto n = static_cast<double>(data.train.size());
    const double train_ce = epoch_ce / n;
    const double train_acc = static_cast<double>(epoch_correct) / n;
    auto [hold_ce, hold_acc] = evaluate(model, data.holdout);
    log.rows.push_back({train_ce, train_acc, hold_acc, lr});
    if (!log.epochs_to_95pct_train && train_acc >= 0.95)
      log.epochs_to_95pct_train = epoch + 1;
  }

  log.best_holdout = log.rows[0].holdout_acc;
  log.best_epoch = 0;
  for (std::size_t e = 1; e < log.rows.size(); ++e) {
    if (log.rows[e].holdout_acc > log.best_holdout) {
      log.best_holdout = log.rows[e].holdout_acc;
      log.best_epoch = e;
    }
  }
  log.final_holdout = log.rows.back().holdout_acc;
  return log;
}

std::string runlog_to_csv(const RunLog& log) {
  std::string out = "epoch,train_ce,train_acc,holdout_acc,lr\n";
  char line[256];
  for (std::size_t e = 0; e < log.rows.size(); ++e) {
    const auto& r = log.rows[e];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", e,
                  r.train_ce, r.train_acc, r.holdout_acc, r.lr);
    out += line;
  }
  return out;
}

void write_runlog_csv(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << runlog_to_csv(log);
}

}  // namespace attnlab
