#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnlab/tensor.hpp"

namespace attnlab {

enum class MaskKind { kFull, kBanded, kStrided, kBlockLocal, kTopK };

// Parsed form of the config-string mask grammar:
//   full | band:5 | band:5+g1 | block:5 | block:5+g3 | stride:4 | topk:5
// Band sizes follow the column-count convention of the experiment legends:
// band:B covers B keys per interior column, so the half-window is (B-1)/2
// and B must be odd.
struct MaskSpec {
  MaskKind kind = MaskKind::kFull;
  std::size_t param = 0;    // band size / block size / stride / k
  std::size_t globals = 0;  // appended global tokens (band/block only)

  bool input_dependent() const { return kind == MaskKind::kTopK; }
  std::string to_string() const;
  static MaskSpec parse(const std::string& text);
  bool operator==(const MaskSpec&) const = default;
};

// L x L binary mask; entry (j, i) = 1 iff query i attends key j, matching
// the column convention of the masked softmax.
struct AttnMask {
  MaskKind kind = MaskKind::kFull;
  std::size_t L = 0;
  std::vector<std::uint8_t> m;  // row-major, m[j * L + i]

  std::uint8_t operator()(std::size_t j, std::size_t i) const {
    return m[j * L + i];
  }
  std::uint8_t& operator()(std::size_t j, std::size_t i) {
    return m[j * L + i];
  }
  std::size_t col_sum(std::size_t i) const;
  std::size_t row_sum(std::size_t j) const;
};

// Input-agnostic mask construction. `param` is the half-window w for banded
// (column count 2w+1), the block size b, or the stride s; it is ignored for
// full. `globals` marks the last g positions as global: their rows and
// columns are fully unmasked on top of the inner pattern.
AttnMask build_agnostic_mask(MaskKind kind, std::size_t L, std::size_t param,
                             std::size_t globals = 0);

// Mask for a spec at internal length L (which already includes any global
// positions). Throws for top-k, which is built per forward pass from D.
AttnMask mask_for_spec(const MaskSpec& spec, std::size_t L);

// Column-wise top-k selection on the dot-product matrix D (L x L, row-major
// with leading dimension ld). Ties break toward the lowest row index.
AttnMask topk_mask(const double* d, std::size_t L, std::size_t ld,
                   std::size_t k);
AttnMask topk_mask(const Tensor& d, std::size_t k);
// Reuses the storage of `mask` (hot paths rebuild a mask per sample).
void topk_mask_into(const double* d, std::size_t L, std::size_t ld,
                    std::size_t k, AttnMask& mask);

// Column-wise masked softmax: A_ji = exp(D_ji) M_ji / sum_j' exp(D_j'i) M_j'i
// with the per-column max over unmasked entries subtracted before
// exponentiation. Masked entries are exactly zero.
Tensor masked_softmax(GradTape* tape, const Tensor& d, const AttnMask& mask);

// Raw forward form writing into caller storage (a may not alias d).
void masked_softmax_raw(const double* d, const AttnMask& mask, std::size_t L,
                        double* a);

// Single-sequence attention V X softmax(X^T W X) under the given mask spec.
// For top-k the mask is rebuilt from the current D and held fixed through
// the backward pass, so gradient flows only through the selected entries.
Tensor attend(GradTape* tape, const Tensor& x, const Tensor& w,
              const Tensor& v, const MaskSpec& spec);

struct AttnHeadParams {
  Tensor W, V;
  Tensor H;  // head aggregator; unused for single-head attention
};

// Multi-head form: sum_i H^(i) * attend(X; W^(i), V^(i)). Top-k masks are
// built per head from that head's dot-products.
Tensor multi_head_attend(GradTape* tape, const Tensor& x,
                         const std::vector<AttnHeadParams>& heads,
                         const MaskSpec& spec);

// Batched attention over B sequences stored as column groups of a
// d x (B * L) matrix. Semantically identical to running attend per sample;
// exists so the big matrix products span the whole batch.
Tensor attend_batched(GradTape* tape, const Tensor& x, const Tensor& w,
                      const Tensor& v, const MaskSpec& spec,
                      std::size_t batch);

}  // namespace attnlab
