#include "attnlab/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "attnlab/numeric.hpp"

namespace attnlab {

namespace {

// shared LN math over an arbitrary input buffer
void ln_forward(const double* in, std::size_t d, std::size_t n, double eps,
                double* out, std::vector<double>& mu,
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

// gradient of LN with respect to its (pre-normalization) input, written
// into `dst` by accumulation
void ln_backward(const double* in, const double* g, std::size_t d,
                 std::size_t n, const std::vector<double>& mu,
                 const std::vector<double>& inv_s, double* dst) {
  const double dd = static_cast<double>(d);
  std::vector<double> dot(n, 0.0), dc_mean(n, 0.0);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < n; ++c)
      dot[c] += g[r * n + c] * (in[r * n + c] - mu[c]);
  for (std::size_t c = 0; c < n; ++c)
    dot[c] *= inv_s[c] * inv_s[c] * inv_s[c] / dd;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < n; ++c)
      dc_mean[c] += g[r * n + c] * inv_s[c] - (in[r * n + c] - mu[c]) * dot[c];
  for (std::size_t c = 0; c < n; ++c) dc_mean[c] /= dd;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < n; ++c)
      dst[r * n + c] += g[r * n + c] * inv_s[c] -
                        (in[r * n + c] - mu[c]) * dot[c] - dc_mean[c];
}

}  // namespace

Tensor layer_norm(GradTape* tape, const Tensor& x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
  const std::size_t d = x.rows();
  const std::size_t n = x.cols();
  if (d < 2) throw std::invalid_argument("layer_norm: need d >= 2");

  std::vector<double> out(d * n);
  std::vector<double> mu, inv_s;
  ln_forward(x.values().data(), d, n, eps, out.data(), mu, inv_s);

  Tensor result(x.shape(), std::move(out), x.requires_grad());
  if (tape && result.requires_grad()) {
    auto on = result.node();
    auto xn = x.node();
    tape->record(on, [on, xn, d, n, mu = std::move(mu),
                      inv_s = std::move(inv_s)] {
      if (xn->grad.empty()) xn->grad.assign(xn->data.size(), 0.0);
      ln_backward(xn->data.data(), on->grad.data(), d, n, mu, inv_s,
                  xn->grad.data());
    });
  }
  return result;
}

Tensor layer_norm_residual(GradTape* tape, const Tensor& a, const Tensor& b,
                           double eps) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("layer_norm_residual: shape mismatch");
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
  const std::size_t d = a.rows();
  const std::size_t n = a.cols();
  if (d < 2) throw std::invalid_argument("layer_norm: need d >= 2");

  std::vector<double> summed(d * n);
  for (std::size_t i = 0; i < summed.size(); ++i)
    summed[i] = a.values()[i] + b.values()[i];
  std::vector<double> out(d * n);
  std::vector<double> mu, inv_s;
  ln_forward(summed.data(), d, n, eps, out.data(), mu, inv_s);

  Tensor result(a.shape(), std::move(out),
                a.requires_grad() || b.requires_grad());
  if (tape && result.requires_grad()) {
    auto on = result.node();
    auto an = a.node();
    auto bn = b.node();
    tape->record(on, [on, an, bn, d, n, summed = std::move(summed),
                      mu = std::move(mu), inv_s = std::move(inv_s)] {
      std::vector<double> din(d * n, 0.0);
      ln_backward(summed.data(), on->grad.data(), d, n, mu, inv_s, din.data());
      if (an->requires_grad) {
        if (an->grad.empty()) {
          an->grad = din;
        } else {
          for (std::size_t i = 0; i < din.size(); ++i) an->grad[i] += din[i];
        }
      }
      if (bn->requires_grad) {
        if (bn->grad.empty()) {
          bn->grad = std::move(din);
        } else {
          for (std::size_t i = 0; i < din.size(); ++i) bn->grad[i] += din[i];
        }
      }
    });
  }
  return result;
}

Tensor mlp(GradTape* tape, const Tensor& x, const Tensor& p, const Tensor& r,
           Activation act) {
  Tensor hidden = matmul(tape, p, x);
  Tensor activated = activation(tape, hidden, act);
  return matmul_ex(tape, r, true, activated, false);
}

Tensor dropout(GradTape* tape, const Tensor& x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);

  // dropped indices sampled by geometric skips: one RNG draw per dropped
  // entry instead of one per element
  std::vector<std::size_t> dropped;
  const double log_keep = std::log1p(-rate);
  std::size_t pos = 0;
  for (;;) {
    double u = rng->uniform();
    while (u <= 0.0) u = rng->uniform();
    pos += static_cast<std::size_t>(std::floor(std::log(u) / log_keep));
    if (pos >= x.size()) break;
    dropped.push_back(pos);
    pos += 1;
  }

  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.values()[i] * keep_scale;
  for (std::size_t idx : dropped) out[idx] = 0.0;

  Tensor result(x.shape(), std::move(out), x.requires_grad());
  if (tape && result.requires_grad()) {
    auto on = result.node();
    auto xn = x.node();
    tape->record(on, [on, xn, dropped = std::move(dropped), keep_scale] {
      const double* g = on->grad.data();
      if (xn->grad.empty()) {
        xn->grad.resize(xn->data.size());
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
          xn->grad[i] = g[i] * keep_scale;
        for (std::size_t idx : dropped) xn->grad[idx] = 0.0;
      } else {
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
          xn->grad[i] += g[i] * keep_scale;
        for (std::size_t idx : dropped)
          xn->grad[idx] -= g[idx] * keep_scale;
      }
    });
  }
  return result;
}

Tensor tf_block(GradTape* tape, const Tensor& x, const BlockParams& blk,
                const MaskSpec& spec, Activation act, double eps,
                double dropout_rate, Rng* rng, std::size_t batch) {
  Tensor attn;
  for (const auto& head : blk.heads) {
    Tensor a = attend_batched(tape, x, head.W, head.V, spec, batch);
    Tensor contrib = head.H ? matmul(tape, head.H, a) : a;
    attn = attn ? add(tape, attn, contrib) : contrib;
  }
  attn = dropout(tape, attn, dropout_rate, rng);
  Tensor xt = layer_norm_residual(tape, x, attn, eps);
  Tensor m = mlp(tape, xt, blk.P, blk.R, act);
  m = dropout(tape, m, dropout_rate, rng);
  return layer_norm_residual(tape, xt, m, eps);
}

Tensor sinusoidal_encodings(std::size_t d, std::size_t L) {
  Tensor e({d, L});
  for (std::size_t r = 0; r < d; ++r) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(r - r % 2) /
                              static_cast<double>(d));
    for (std::size_t pos = 0; pos < L; ++pos) {
      const double angle = static_cast<double>(pos) * freq;
      e.at(r, pos) = (r % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return e;
}

namespace {

Tensor init_uniform(Rng& rng, std::size_t rows, std::size_t cols,
                    std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t({rows, cols}, true);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  Rng rng(init_seed);
  const auto d = cfg_.d;
  // Token embeddings start at unit scale so the token signal is comparable
  // to the fixed sinusoidal position encodings. With the fan-in scale the
  // identity of a token contributes ~1/sqrt(d) of the embedded column and
  // training stalls at chance level for tens of epochs.
  params_.T = init_uniform(rng, d, cfg_.vocab, 1);
  params_.blocks.resize(cfg_.blocks);
  for (auto& blk : params_.blocks) {
    blk.heads.resize(cfg_.heads);
    for (auto& head : blk.heads) {
      head.W = init_uniform(rng, d, d, d);
      head.V = init_uniform(rng, d, d, d);
      if (cfg_.heads > 1) head.H = init_uniform(rng, d, d, d);
    }
    blk.P = init_uniform(rng, cfg_.d_mlp, d, d);
    blk.R = init_uniform(rng, cfg_.d_mlp, d, cfg_.d_mlp);
  }
  params_.Phi = init_uniform(rng, cfg_.classes, d, d);
  if (cfg_.mask.globals > 0) {
    // separate stream keeps the core parameters identical across mask
    // variants sharing a seed; global tokens are embeddings, same unit scale
    Rng grng(derive_seed(init_seed, 0x91EBA1));
    params_.global = init_uniform(grng, d, cfg_.mask.globals, 1);
  }
  pos_ = sinusoidal_encodings(d, cfg_.seq_len);
}

Model::Model(ModelConfig cfg, ModelParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  pos_ = sinusoidal_encodings(cfg_.d, cfg_.seq_len);
}

void Model::set_position_encodings(const Tensor& e) {
  if (e.rows() != cfg_.d || e.cols() != cfg_.seq_len)
    throw std::invalid_argument("position encodings: shape must be d x L");
  pos_ = e;
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.T", params_.T);
  for (std::size_t t = 0; t < params_.blocks.size(); ++t) {
    auto& blk = params_.blocks[t];
    const std::string prefix = "block" + std::to_string(t);
    if (cfg_.heads == 1) {
      out.emplace_back(prefix + ".W", blk.heads[0].W);
      out.emplace_back(prefix + ".V", blk.heads[0].V);
    } else {
      for (std::size_t h = 0; h < blk.heads.size(); ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        out.emplace_back(hp + ".W", blk.heads[h].W);
        out.emplace_back(hp + ".V", blk.heads[h].V);
        out.emplace_back(hp + ".H", blk.heads[h].H);
      }
    }
    out.emplace_back(prefix + ".P", blk.P);
    out.emplace_back(prefix + ".R", blk.R);
  }
  out.emplace_back("readout.Phi", params_.Phi);
  if (params_.global) out.emplace_back("embed.global", params_.global);
  return out;
}

Tensor Model::embed_batch(const std::vector<const std::vector<int>*>& seqs,
                          GradTape* tape) {
  const std::size_t batch = seqs.size();
  const std::size_t L = cfg_.seq_len;
  const std::size_t Li = cfg_.internal_len();
  const std::size_t g = cfg_.mask.globals;
  const std::size_t d = cfg_.d;
  const std::size_t n = batch * Li;

  std::vector<int> ids;
  ids.reserve(batch * L);
  for (const auto* seq : seqs) {
    if (seq->size() != L)
      throw std::invalid_argument("forward: sequence length mismatch");
    for (int v : *seq) {
      if (v < 0 || static_cast<std::size_t>(v) >= cfg_.vocab)
        throw std::out_of_range("forward: token id outside vocabulary");
      ids.push_back(v);
    }
  }

  std::vector<double> data(d * n);
  const double* tv = params_.T.values().data();
  const double* ev = pos_.values().data();
  const double* gv = g > 0 ? params_.global.values().data() : nullptr;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < L; ++i) {
      const auto v = static_cast<std::size_t>(ids[b * L + i]);
      const std::size_t col = b * Li + i;
      for (std::size_t r = 0; r < d; ++r)
        data[r * n + col] = tv[r * cfg_.vocab + v] + ev[r * L + i];
    }
    for (std::size_t j = 0; j < g; ++j) {
      const std::size_t col = b * Li + L + j;
      for (std::size_t r = 0; r < d; ++r) data[r * n + col] = gv[r * g + j];
    }
  }

  const bool rg =
      params_.T.requires_grad() || (g > 0 && params_.global.requires_grad());
  Tensor out({d, n}, std::move(data), rg);
  if (tape && rg) {
    auto on = out.node();
    auto tn = params_.T.node();
    auto gn = g > 0 ? params_.global.node() : nullptr;
    const std::size_t vocab = cfg_.vocab;
    tape->record(on, [on, tn, gn, ids = std::move(ids), batch, L, Li, g, d, n,
                      vocab] {
      if (tn->requires_grad && tn->grad.empty())
        tn->grad.assign(tn->data.size(), 0.0);
      if (gn && gn->requires_grad && gn->grad.empty())
        gn->grad.assign(gn->data.size(), 0.0);
      const double* grad = on->grad.data();
      for (std::size_t b = 0; b < batch; ++b) {
        if (tn->requires_grad) {
          for (std::size_t i = 0; i < L; ++i) {
            const auto v = static_cast<std::size_t>(ids[b * L + i]);
            const std::size_t col = b * Li + i;
            for (std::size_t r = 0; r < d; ++r)
              tn->grad[r * vocab + v] += grad[r * n + col];
          }
        }
        if (gn && gn->requires_grad) {
          for (std::size_t j = 0; j < g; ++j) {
            const std::size_t col = b * Li + L + j;
            for (std::size_t r = 0; r < d; ++r)
              gn->grad[r * g + j] += grad[r * n + col];
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Readout aggregation: per sample, mean of the first L columns (global
// positions are excluded from the average).
Tensor readout_mean(GradTape* tape, const Tensor& x, std::size_t batch,
                    std::size_t L, std::size_t Li) {
  const std::size_t d = x.rows();
  const std::size_t n = x.cols();
  std::vector<double> z(d * batch, 0.0);
  const double invL = 1.0 / static_cast<double>(L);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t r = 0; r < d; ++r)
        z[r * batch + b] += x.values()[r * n + b * Li + i] * invL;

  Tensor out({d, batch}, std::move(z), x.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto xn = x.node();
    tape->record(on, [on, xn, batch, L, Li, d, n, invL] {
      if (xn->grad.empty()) xn->grad.assign(xn->data.size(), 0.0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < L; ++i)
          for (std::size_t r = 0; r < d; ++r)
            xn->grad[r * n + b * Li + i] += on->grad[r * batch + b] * invL;
    });
  }
  return out;
}

}  // namespace

Tensor Model::forward_batch(const std::vector<const std::vector<int>*>& seqs,
                            GradTape* tape, Rng* dropout_rng) {
  const std::size_t batch = seqs.size();
  Tensor x = embed_batch(seqs, tape);
  for (const auto& blk : params_.blocks)
    x = tf_block(tape, x, blk, cfg_.mask, cfg_.act, cfg_.ln_eps, cfg_.dropout,
                 dropout_rng, batch);
  Tensor z = readout_mean(tape, x, batch, cfg_.seq_len, cfg_.internal_len());
  return matmul(tape, params_.Phi, z);
}

Tensor Model::forward(const std::vector<int>& tokens, GradTape* tape,
                      Rng* dropout_rng) {
  return forward_batch({&tokens}, tape, dropout_rng);
}

std::vector<Tensor> Model::collect_block_inputs(
    const std::vector<int>& tokens) {
  std::vector<Tensor> inputs;
  Tensor x = embed_batch({&tokens}, nullptr);
  for (const auto& blk : params_.blocks) {
    inputs.push_back(x);
    x = tf_block(nullptr, x, blk, cfg_.mask, cfg_.act, cfg_.ln_eps, 0.0,
                 nullptr, 1);
  }
  return inputs;
}

Model Model::clone() const {
  ModelParams copy;
  auto dup = [](const Tensor& t) {
    if (!t) return Tensor();
    return Tensor(t.shape(), t.values(), t.requires_grad());
  };
  copy.T = dup(params_.T);
  copy.Phi = dup(params_.Phi);
  copy.global = dup(params_.global);
  copy.blocks.reserve(params_.blocks.size());
  for (const auto& blk : params_.blocks) {
    BlockParams b;
    for (const auto& head : blk.heads)
      b.heads.push_back({dup(head.W), dup(head.V), dup(head.H)});
    b.P = dup(blk.P);
    b.R = dup(blk.R);
    copy.blocks.push_back(std::move(b));
  }
  return Model(cfg_, std::move(copy));
}

void save_checkpoint(const Model& model, const std::string& path) {
  const auto& cfg = model.config();
  nlohmann::ordered_json j;
  j["format"] = "attnlab-checkpoint-v1";
  j["model"] = {{"d", cfg.d},
                {"d_mlp", cfg.d_mlp},
                {"blocks", cfg.blocks},
                {"heads", cfg.heads},
                {"seq_len", cfg.seq_len},
                {"vocab", cfg.vocab},
                {"classes", cfg.classes},
                {"activation", to_string(cfg.act)},
                {"mask", cfg.mask.to_string()},
                {"dropout", cfg.dropout},
                {"ln_eps", cfg.ln_eps}};
  auto params = const_cast<Model&>(model).named_params();
  auto& arr = j["params"] = nlohmann::ordered_json::array();
  for (auto& [name, tensor] : params) {
    arr.push_back({{"name", name},
                   {"shape", tensor.shape()},
                   {"data", encode_f64(tensor.values())}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << j.dump(1) << "\n";
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "attnlab-checkpoint-v1")
    throw std::runtime_error("checkpoint: unknown format");
  const auto& m = j.at("model");
  ModelConfig cfg;
  cfg.d = m.at("d");
  cfg.d_mlp = m.at("d_mlp");
  cfg.blocks = m.at("blocks");
  cfg.heads = m.at("heads");
  cfg.seq_len = m.at("seq_len");
  cfg.vocab = m.at("vocab");
  cfg.classes = m.at("classes");
  cfg.act = activation_from_string(m.at("activation"));
  cfg.mask = MaskSpec::parse(m.at("mask"));
  cfg.dropout = m.at("dropout");
  cfg.ln_eps = m.at("ln_eps");

  Model model(cfg, 0);
  auto params = model.named_params();
  std::map<std::string, Tensor> by_name(params.begin(), params.end());
  for (const auto& entry : j.at("params")) {
    const std::string name = entry.at("name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unexpected parameter " + name);
    auto data = decode_f64(entry.at("data"));
    if (data.size() != it->second.size())
      throw std::runtime_error("checkpoint: size mismatch for " + name);
    it->second.values() = std::move(data);
  }
  return model;
}

}  // namespace attnlab
