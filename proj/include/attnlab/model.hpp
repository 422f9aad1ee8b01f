#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/tensor.hpp"

namespace attnlab {

// Column-wise layer normalization (x - mean) / sqrt(eps + var) with fixed
// unit scale and zero shift.
Tensor layer_norm(GradTape* tape, const Tensor& x, double eps);

// Fused residual form LN(a + b); the gradient flows to both inputs.
Tensor layer_norm_residual(GradTape* tape, const Tensor& a, const Tensor& b,
                           double eps);

// Token-wise MLP R^T sigma(P x).
Tensor mlp(GradTape* tape, const Tensor& x, const Tensor& p, const Tensor& r,
           Activation act);

// Inverted dropout; active only when rng is non-null (training mode).
Tensor dropout(GradTape* tape, const Tensor& x, double rate, Rng* rng);

struct BlockParams {
  std::vector<AttnHeadParams> heads;  // single entry when h == 1 (H unused)
  Tensor P, R;
};

// Post-norm transformer block: LN(Xt + MLP(Xt)), Xt = LN(X + Attn(X)).
// Dropout is applied to both residual branches when rng is non-null.
// `batch`: number of sequences packed into the columns of X.
Tensor tf_block(GradTape* tape, const Tensor& x, const BlockParams& blk,
                const MaskSpec& spec, Activation act, double eps,
                double dropout_rate, Rng* rng, std::size_t batch = 1);

struct ModelConfig {
  std::size_t d = 64;
  std::size_t d_mlp = 64;
  std::size_t blocks = 5;   // tau
  std::size_t heads = 1;    // h
  std::size_t seq_len = 40; // L, task token count (globals excluded)
  std::size_t vocab = 2;    // D
  std::size_t classes = 2;  // Y
  Activation act = Activation::kRelu;
  MaskSpec mask;
  double dropout = 0.01;
  double ln_eps = 1e-5;

  std::size_t internal_len() const { return seq_len + mask.globals; }
};

struct ModelParams {
  Tensor T;    // d x D token embeddings
  std::vector<BlockParams> blocks;
  Tensor Phi;  // Y x d readout
  Tensor global;  // d x g learned global token embeddings; empty when g == 0
};

// The full classifier: token+position embedding, tau blocks, mean-pooled
// readout over the original L positions. Position encodings are fixed
// sinusoids and the aggregator is (1/L) 1_L; neither receives gradient.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t init_seed);
  Model(ModelConfig cfg, ModelParams params);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const Tensor& position_encodings() const { return pos_; }
  // replaces the fixed encodings (ablations); shape must stay d x L
  void set_position_encodings(const Tensor& e);

  // Stable name-ordered views of every learnable matrix.
  std::vector<std::pair<std::string, Tensor>> named_params();

  // Logits for one instance (Y x 1). Throws std::out_of_range for unknown
  // token ids. Training mode iff dropout_rng != nullptr.
  Tensor forward(const std::vector<int>& tokens, GradTape* tape,
                 Rng* dropout_rng = nullptr);

  // Batched logits (Y x B) over sequences of equal length.
  Tensor forward_batch(const std::vector<const std::vector<int>*>& seqs,
                       GradTape* tape, Rng* dropout_rng = nullptr);

  // Per-block input representations X^(0..tau-1) plus final logits, for the
  // dispersion sweeps (always eval mode, single instance).
  std::vector<Tensor> collect_block_inputs(const std::vector<int>& tokens);

  // Deep copy with independent parameter storage.
  Model clone() const;

 private:
  Tensor embed_batch(const std::vector<const std::vector<int>*>& seqs,
                     GradTape* tape);

  ModelConfig cfg_;
  ModelParams params_;
  Tensor pos_;  // d x L fixed sinusoidal encodings
};

Tensor sinusoidal_encodings(std::size_t d, std::size_t L);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace attnlab
