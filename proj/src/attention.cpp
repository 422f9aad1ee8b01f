#include "attnlab/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "attnlab/blas.hpp"
#include "attnlab/numeric.hpp"

namespace attnlab {

std::string MaskSpec::to_string() const {
  std::string s;
  switch (kind) {
    case MaskKind::kFull: return "full";
    case MaskKind::kBanded: s = "band:" + std::to_string(param); break;
    case MaskKind::kStrided: return "stride:" + std::to_string(param);
    case MaskKind::kBlockLocal: s = "block:" + std::to_string(param); break;
    case MaskKind::kTopK: return "topk:" + std::to_string(param);
  }
  if (globals > 0) s += "+g" + std::to_string(globals);
  return s;
}

MaskSpec MaskSpec::parse(const std::string& text) {
  MaskSpec spec;
  if (text == "full") return spec;
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("mask spec: expected kind:param in '" + text +
                                "'");
  const std::string kind = text.substr(0, colon);
  std::string rest = text.substr(colon + 1);
  const auto plus = rest.find("+g");
  if (plus != std::string::npos) {
    spec.globals = std::stoul(rest.substr(plus + 2));
    rest = rest.substr(0, plus);
  }
  spec.param = std::stoul(rest);
  if (kind == "band") {
    spec.kind = MaskKind::kBanded;
    if (spec.param % 2 == 0)
      throw std::invalid_argument("mask spec: band size must be odd");
  } else if (kind == "block") {
    spec.kind = MaskKind::kBlockLocal;
  } else if (kind == "stride") {
    spec.kind = MaskKind::kStrided;
  } else if (kind == "topk") {
    spec.kind = MaskKind::kTopK;
    if (spec.globals > 0)
      throw std::invalid_argument("mask spec: topk takes no global tokens");
  } else {
    throw std::invalid_argument("mask spec: unknown kind '" + kind + "'");
  }
  if (spec.param == 0 && spec.kind != MaskKind::kBanded)
    throw std::invalid_argument("mask spec: parameter must be >= 1");
  return spec;
}

std::size_t AttnMask::col_sum(std::size_t i) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < L; ++j) s += m[j * L + i];
  return s;
}

std::size_t AttnMask::row_sum(std::size_t j) const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < L; ++i) s += m[j * L + i];
  return s;
}

AttnMask build_agnostic_mask(MaskKind kind, std::size_t L, std::size_t param,
                             std::size_t globals) {
  if (L < 1) throw std::invalid_argument("mask: L must be >= 1");
  if (globals >= L) throw std::invalid_argument("mask: globals must be < L");
  if (kind == MaskKind::kTopK)
    throw std::invalid_argument("mask: top-k is input dependent");
  if ((kind == MaskKind::kStrided || kind == MaskKind::kBlockLocal) &&
      param < 1)
    throw std::invalid_argument("mask: parameter must be >= 1");

  AttnMask mask;
  mask.kind = kind;
  mask.L = L;
  mask.m.assign(L * L, 0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      bool on = false;
      switch (kind) {
        case MaskKind::kFull:
          on = true;
          break;
        case MaskKind::kBanded: {
          const auto lo = i >= param ? i - param : 0;
          const auto hi = i + param;
          on = j >= lo && j <= hi;
          break;
        }
        case MaskKind::kBlockLocal:
          on = (i / param) == (j / param);
          break;
        case MaskKind::kStrided: {
          const auto diff = i >= j ? i - j : j - i;
          on = diff % param == 0;
          break;
        }
        case MaskKind::kTopK:
          break;
      }
      if (on) mask.m[j * L + i] = 1;
    }
  }
  // global tokens occupy the trailing positions: fully connected both ways
  for (std::size_t g = L - globals; g < L; ++g) {
    for (std::size_t t = 0; t < L; ++t) {
      mask.m[g * L + t] = 1;
      mask.m[t * L + g] = 1;
    }
  }
  return mask;
}

AttnMask mask_for_spec(const MaskSpec& spec, std::size_t L) {
  switch (spec.kind) {
    case MaskKind::kFull:
      return build_agnostic_mask(MaskKind::kFull, L, 0, spec.globals);
    case MaskKind::kBanded:
      return build_agnostic_mask(MaskKind::kBanded, L, (spec.param - 1) / 2,
                                 spec.globals);
    case MaskKind::kBlockLocal:
      return build_agnostic_mask(MaskKind::kBlockLocal, L, spec.param,
                                 spec.globals);
    case MaskKind::kStrided:
      return build_agnostic_mask(MaskKind::kStrided, L, spec.param,
                                 spec.globals);
    case MaskKind::kTopK:
      throw std::invalid_argument("mask_for_spec: top-k is input dependent");
  }
  throw std::invalid_argument("mask_for_spec: bad kind");
}

namespace {

// column-wise top-k selection into caller storage; `mask` must hold L*L
// zeroed entries and `scratch` L slots
void topk_select(const double* d, std::size_t L, std::size_t ld,
                 std::size_t k, std::uint8_t* mask,
                 std::pair<double, std::size_t>* scratch) {
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) scratch[j] = {d[j * ld + i], j};
    std::partial_sort(scratch, scratch + k, scratch + L,
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;  // ties: lowest row index
                      });
    for (std::size_t r = 0; r < k; ++r) mask[scratch[r].second * L + i] = 1;
  }
}

}  // namespace

void topk_mask_into(const double* d, std::size_t L, std::size_t ld,
                    std::size_t k, AttnMask& mask) {
  if (k < 1 || k > L)
    throw std::invalid_argument("topk_mask: k must be in [1, L]");
  mask.kind = MaskKind::kTopK;
  mask.L = L;
  mask.m.assign(L * L, 0);
  thread_local std::vector<std::pair<double, std::size_t>> scratch;
  scratch.resize(L);
  topk_select(d, L, ld, k, mask.m.data(), scratch.data());
}

AttnMask topk_mask(const double* d, std::size_t L, std::size_t ld,
                   std::size_t k) {
  AttnMask mask;
  topk_mask_into(d, L, ld, k, mask);
  return mask;
}

AttnMask topk_mask(const Tensor& d, std::size_t k) {
  if (d.rows() != d.cols())
    throw std::invalid_argument("topk_mask: D must be square");
  return topk_mask(d.values().data(), d.rows(), d.cols(), k);
}

namespace {

// Forward softmax of one masked column; writes A into `a` (stride ld).
// Max-subtraction runs over unmasked entries only.
void masked_softmax_col(const double* d, const std::uint8_t* m, std::size_t L,
                        std::size_t ld, std::size_t i, double* a) {
  double dmax = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < L; ++j)
    if (m[j * L + i] && d[j * ld + i] > dmax) dmax = d[j * ld + i];
  if (!std::isfinite(dmax))
    throw std::logic_error("masked_softmax: column has no unmasked entry");
  double total = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    if (m[j * L + i]) {
      const double e = fast_exp(d[j * ld + i] - dmax);
      a[j * ld + i] = e;
      total += e;
    } else {
      a[j * ld + i] = 0.0;
    }
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < L; ++j)
    if (m[j * L + i]) a[j * ld + i] *= inv;
}

// dD = A .* (G - colsum(G .* A)) computed per column; zero rows of A keep
// masked entries at zero gradient.
void masked_softmax_col_backward(const double* a, const double* g,
                                 std::size_t L, std::size_t ld, std::size_t i,
                                 double* dd) {
  double dot = 0.0;
  for (std::size_t j = 0; j < L; ++j) dot += g[j * ld + i] * a[j * ld + i];
  for (std::size_t j = 0; j < L; ++j)
    dd[j * ld + i] += a[j * ld + i] * (g[j * ld + i] - dot);
}

}  // namespace

void masked_softmax_raw(const double* d, const AttnMask& mask, std::size_t L,
                        double* a) {
  for (std::size_t i = 0; i < L; ++i)
    masked_softmax_col(d, mask.m.data(), L, L, i, a);
}

Tensor masked_softmax(GradTape* tape, const Tensor& d, const AttnMask& mask) {
  const std::size_t L = d.rows();
  if (d.cols() != L) throw std::invalid_argument("masked_softmax: D not square");
  if (mask.L != L) throw std::invalid_argument("masked_softmax: mask size");

  std::vector<double> a(L * L);
  for (std::size_t i = 0; i < L; ++i)
    masked_softmax_col(d.values().data(), mask.m.data(), L, L, i, a.data());

  Tensor out({L, L}, std::move(a), d.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto dn = d.node();
    tape->record(on, [on, dn, L] {
      if (dn->grad.empty()) dn->grad.assign(dn->data.size(), 0.0);
      for (std::size_t i = 0; i < L; ++i)
        masked_softmax_col_backward(on->data.data(), on->grad.data(), L, L, i,
                                    dn->grad.data());
    });
  }
  return out;
}

Tensor attend(GradTape* tape, const Tensor& x, const Tensor& w,
              const Tensor& v, const MaskSpec& spec) {
  return attend_batched(tape, x, w, v, spec, 1);
}

Tensor multi_head_attend(GradTape* tape, const Tensor& x,
                         const std::vector<AttnHeadParams>& heads,
                         const MaskSpec& spec) {
  if (heads.empty()) throw std::invalid_argument("multi_head_attend: no heads");
  Tensor total;
  for (const auto& head : heads) {
    Tensor a = attend(tape, x, head.W, head.V, spec);
    Tensor contrib = head.H ? matmul(tape, head.H, a) : a;
    total = total ? add(tape, total, contrib) : contrib;
  }
  return total;
}

Tensor attend_batched(GradTape* tape, const Tensor& x, const Tensor& w,
                      const Tensor& v, const MaskSpec& spec,
                      std::size_t batch) {
  const std::size_t d = x.rows();
  const std::size_t total_cols = x.cols();
  if (w.rows() != d || w.cols() != d || v.rows() != d || v.cols() != d)
    throw std::invalid_argument("attend: W and V must be d x d");
  if (batch == 0 || total_cols % batch != 0)
    throw std::invalid_argument("attend: columns not divisible by batch");
  const std::size_t L = total_cols / batch;

  // shared static mask for the input-agnostic kinds
  AttnMask static_mask;
  if (!spec.input_dependent()) static_mask = mask_for_spec(spec, L);

  const std::size_t n = total_cols;
  std::vector<double> u(d * n);  // U = W X
  std::vector<double> y(d * n);  // Y = V X
  gemm(false, false, d, n, d, 1.0, w.values().data(), d, x.values().data(), n,
       0.0, u.data(), n);
  gemm(false, false, d, n, d, 1.0, v.values().data(), d, x.values().data(), n,
       0.0, y.data(), n);

  // per-sample D, mask, softmax, and output O_b = Y_b A_b; sample slices are
  // copied into contiguous scratch so the small products stay cache-friendly
  std::vector<double> a_all(batch * L * L);
  std::vector<double> out_data(d * n);
  std::vector<double> xb(d * L), ub(d * L), ob(d * L), dmat(L * L);
  AttnMask sample_mask;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < d; ++r) {
      const std::size_t off = r * n + b * L;
      std::copy_n(x.values().data() + off, L, xb.data() + r * L);
      std::copy_n(u.data() + off, L, ub.data() + r * L);
    }
    gemm(true, false, L, L, d, 1.0, xb.data(), L, ub.data(), L, 0.0,
         dmat.data(), L);
    const AttnMask* mask = &static_mask;
    if (spec.input_dependent()) {
      topk_mask_into(dmat.data(), L, L, spec.param, sample_mask);
      mask = &sample_mask;
    }
    double* ab = a_all.data() + b * L * L;
    for (std::size_t i = 0; i < L; ++i)
      masked_softmax_col(dmat.data(), mask->m.data(), L, L, i, ab);
    for (std::size_t r = 0; r < d; ++r)
      std::copy_n(y.data() + r * n + b * L, L, ub.data() + r * L);
    gemm(false, false, d, L, L, 1.0, ub.data(), L, ab, L, 0.0, ob.data(), L);
    for (std::size_t r = 0; r < d; ++r)
      std::copy_n(ob.data() + r * L, L, out_data.data() + r * n + b * L);
  }

  const bool rg =
      x.requires_grad() || w.requires_grad() || v.requires_grad();
  Tensor out({d, n}, std::move(out_data), rg);
  if (tape && rg) {
    auto on = out.node();
    auto xn = x.node();
    auto wn = w.node();
    auto vn = v.node();
    tape->record(on, [on, xn, wn, vn, u = std::move(u), y = std::move(y),
                      a_all = std::move(a_all), d, n, L, batch] {
      const double* g = on->grad.data();
      // every slice of du/dy/dx is written exactly once, so the buffers can
      // start uninitialized
      std::unique_ptr<double[]> du(new double[d * n]);
      std::unique_ptr<double[]> dy(new double[d * n]);
      std::unique_ptr<double[]> dx;
      const bool need_dx = xn->requires_grad;
      if (need_dx) dx.reset(new double[d * n]);
      std::vector<double> da(L * L), dd(L * L);
      std::vector<double> gb(d * L), scratch(d * L), out_small(d * L);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* ab = a_all.data() + b * L * L;
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(g + r * n + b * L, L, gb.data() + r * L);
        // dY_b = G_b A_b^T
        gemm(false, true, d, L, L, 1.0, gb.data(), L, ab, L, 0.0,
             out_small.data(), L);
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(out_small.data() + r * L, L, dy.get() + r * n + b * L);
        // dA_b = Y_b^T G_b
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(y.data() + r * n + b * L, L, scratch.data() + r * L);
        gemm(true, false, L, L, d, 1.0, scratch.data(), L, gb.data(), L, 0.0,
             da.data(), L);
        std::fill(dd.begin(), dd.end(), 0.0);
        for (std::size_t i = 0; i < L; ++i)
          masked_softmax_col_backward(ab, da.data(), L, L, i, dd.data());
        // dU_b = X_b dD_b
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(xn->data.data() + r * n + b * L, L,
                      scratch.data() + r * L);
        gemm(false, false, d, L, L, 1.0, scratch.data(), L, dd.data(), L, 0.0,
             out_small.data(), L);
        for (std::size_t r = 0; r < d; ++r)
          std::copy_n(out_small.data() + r * L, L, du.get() + r * n + b * L);
        if (need_dx) {
          // dX_b = U_b dD_b^T (the W^T dU and V^T dY terms accumulate below)
          for (std::size_t r = 0; r < d; ++r)
            std::copy_n(u.data() + r * n + b * L, L, scratch.data() + r * L);
          gemm(false, true, d, L, L, 1.0, scratch.data(), L, dd.data(), L,
               0.0, out_small.data(), L);
          for (std::size_t r = 0; r < d; ++r)
            std::copy_n(out_small.data() + r * L, L, dx.get() + r * n + b * L);
        }
      }
      if (wn->requires_grad) {
        if (wn->grad.empty()) wn->grad.assign(wn->data.size(), 0.0);
        gemm(false, true, d, d, n, 1.0, du.get(), n, xn->data.data(), n, 1.0,
             wn->grad.data(), d);
      }
      if (vn->requires_grad) {
        if (vn->grad.empty()) vn->grad.assign(vn->data.size(), 0.0);
        gemm(false, true, d, d, n, 1.0, dy.get(), n, xn->data.data(), n, 1.0,
             vn->grad.data(), d);
      }
      if (need_dx) {
        // dX += W^T dU + V^T dY
        gemm(true, false, d, n, d, 1.0, wn->data.data(), d, du.get(), n, 1.0,
             dx.get(), n);
        gemm(true, false, d, n, d, 1.0, vn->data.data(), d, dy.get(), n, 1.0,
             dx.get(), n);
        if (xn->grad.empty()) {
          xn->grad.assign(dx.get(), dx.get() + d * n);
        } else {
          for (std::size_t i = 0; i < d * n; ++i) xn->grad[i] += dx[i];
        }
      }
    });
  }
  return out;
}

}  // namespace attnlab
