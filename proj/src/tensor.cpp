#include "attnlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "attnlab/blas.hpp"
#include "attnlab/numeric.hpp"

namespace attnlab {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor: zero dimension");
    n *= d;
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void ensure_grad(TensorNode* n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
}

void accumulate(TensorNode* n, const double* g) {
  if (n->grad.empty()) {  // first contribution copies instead of zero-add
    n->grad.assign(g, g + n->data.size());
    return;
  }
  for (std::size_t i = 0; i < n->data.size(); ++i) n->grad[i] += g[i];
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  if (s == "mish") return Activation::kMish;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
    case Activation::kMish: return "mish";
  }
  return "?";
}

double activation_value(Activation a, double x) {
  switch (a) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kGelu:
      // exact Gaussian-CDF form, not the tanh approximation
      return x * 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    case Activation::kMish: {
      const double sp = x > 20.0 ? x : std::log1p(std::exp(x));
      return x * std::tanh(sp);
    }
  }
  return 0.0;
}

double activation_derivative(Activation a, double x) {
  switch (a) {
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::kGelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
      const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    }
    case Activation::kMish: {
      const double sp = x > 20.0 ? x : std::log1p(std::exp(x));
      const double t = std::tanh(sp);
      const double sig = 1.0 / (1.0 + std::exp(-x));
      return t + x * (1.0 - t * t) * sig;
    }
  }
  return 0.0;
}

double activation_lipschitz(Activation a) {
  if (a == Activation::kRelu) return 1.0;
  double best = 0.0;
  for (int i = 0; i <= 24000; ++i) {
    const double x = -6.0 + i * 0.0005;
    best = std::max(best, std::abs(activation_derivative(a, x)));
  }
  return best;
}

Tensor::Tensor(std::vector<std::size_t> shape, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  const std::size_t n = shape_size(shape);
  node_->shape = std::move(shape);
  node_->data.assign(n, 0.0);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data,
               bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  if (shape_size(shape) != data.size())
    throw std::invalid_argument("tensor: data length does not match shape");
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) {
  return Tensor({1}, std::vector<double>{v});
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

std::size_t Tensor::rows() const {
  return node_->shape.empty() ? 1 : node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (node_->shape.size() >= 2) return node_->shape[1];
  return 1;
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return node_->data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

double Tensor::item() const {
  if (!is_scalar()) throw std::logic_error("item: tensor is not scalar");
  return node_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.empty())
    throw std::logic_error("grad: no gradient populated; run backward first");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(const double* g, std::size_t n) {
  if (n != node_->data.size())
    throw std::invalid_argument("accumulate_grad: size mismatch");
  accumulate(node_.get(), g);
}

std::int64_t GradTape::record(std::shared_ptr<TensorNode> out,
                              std::function<void()> backward_fn) {
  const auto id = static_cast<std::int64_t>(entries_.size());
  out->node_id = id;
  entries_.push_back({std::move(out), std::move(backward_fn)});
  return id;
}

void GradTape::backward(const Tensor& loss) {
  if (!loss || !loss.is_scalar())
    throw std::logic_error("backward: loss must be a scalar tensor");
  for (auto& e : entries_) {
    if (!e.out->grad.empty())
      std::fill(e.out->grad.begin(), e.out->grad.end(), 0.0);
  }
  loss.node()->grad.assign(1, 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->out->grad.empty()) it->backward();
  }
}

Tensor matmul_ex(GradTape* tape, const Tensor& a, bool trans_a,
                 const Tensor& b, bool trans_b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw std::invalid_argument("matmul: operands must be 2-D");
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t ka = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (ka != kb) throw std::invalid_argument("matmul: inner dimensions differ");
  const std::size_t k = ka;

  std::vector<double> out_data(m * n);
  gemm(trans_a, trans_b, m, n, k, 1.0, a.values().data(), a.cols(),
       b.values().data(), b.cols(), 0.0, out_data.data(), n);

  Tensor out({m, n}, std::move(out_data),
             a.requires_grad() || b.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto an = a.node();
    auto bn = b.node();
    tape->record(on, [on, an, bn, trans_a, trans_b, m, n, k] {
      const double* g = on->grad.data();
      const double* av = an->data.data();
      const double* bv = bn->data.data();
      const std::size_t lda = an->shape[1];
      const std::size_t ldb = bn->shape[1];
      if (an->requires_grad) {
        ensure_grad(an.get());
        double* da = an->grad.data();
        if (!trans_a && !trans_b)        // dA = G B^T
          gemm(false, true, m, k, n, 1.0, g, n, bv, ldb, 1.0, da, lda);
        else if (!trans_a && trans_b)    // dA = G B
          gemm(false, false, m, k, n, 1.0, g, n, bv, ldb, 1.0, da, lda);
        else if (trans_a && !trans_b)    // dA = B G^T
          gemm(false, true, k, m, n, 1.0, bv, ldb, g, n, 1.0, da, lda);
        else                             // dA = B^T G^T
          gemm(true, true, k, m, n, 1.0, bv, ldb, g, n, 1.0, da, lda);
      }
      if (bn->requires_grad) {
        ensure_grad(bn.get());
        double* db = bn->grad.data();
        if (!trans_a && !trans_b)        // dB = A^T G
          gemm(true, false, k, n, m, 1.0, av, lda, g, n, 1.0, db, ldb);
        else if (trans_a && !trans_b)    // dB = A G
          gemm(false, false, k, n, m, 1.0, av, lda, g, n, 1.0, db, ldb);
        else if (!trans_a && trans_b)    // dB = G^T A
          gemm(true, false, n, k, m, 1.0, g, n, av, lda, 1.0, db, ldb);
        else                             // dB = G^T A^T
          gemm(true, true, n, k, m, 1.0, g, n, av, lda, 1.0, db, ldb);
      }
    });
  }
  return out;
}

Tensor matmul(GradTape* tape, const Tensor& a, const Tensor& b) {
  return matmul_ex(tape, a, false, b, false);
}

Tensor add(GradTape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> data(a.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = a.values()[i] + b.values()[i];
  Tensor out(a.shape(), std::move(data),
             a.requires_grad() || b.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto an = a.node();
    auto bn = b.node();
    tape->record(on, [on, an, bn] {
      if (an->requires_grad) accumulate(an.get(), on->grad.data());
      if (bn->requires_grad) accumulate(bn.get(), on->grad.data());
    });
  }
  return out;
}

Tensor sub(GradTape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> data(a.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = a.values()[i] - b.values()[i];
  Tensor out(a.shape(), std::move(data),
             a.requires_grad() || b.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto an = a.node();
    auto bn = b.node();
    tape->record(on, [on, an, bn] {
      if (an->requires_grad) accumulate(an.get(), on->grad.data());
      if (bn->requires_grad) {
        ensure_grad(bn.get());
        for (std::size_t i = 0; i < bn->data.size(); ++i)
          bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor scale(GradTape* tape, const Tensor& a, double c) {
  std::vector<double> data(a.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = c * a.values()[i];
  Tensor out(a.shape(), std::move(data), a.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto an = a.node();
    tape->record(on, [on, an, c] {
      ensure_grad(an.get());
      for (std::size_t i = 0; i < an->data.size(); ++i)
        an->grad[i] += c * on->grad[i];
    });
  }
  return out;
}

Tensor activation(GradTape* tape, const Tensor& x, Activation kind) {
  std::vector<double> data(x.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = activation_value(kind, x.values()[i]);
  Tensor out(x.shape(), std::move(data), x.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto xn = x.node();
    tape->record(on, [on, xn, kind] {
      ensure_grad(xn.get());
      for (std::size_t i = 0; i < xn->data.size(); ++i)
        xn->grad[i] += on->grad[i] * activation_derivative(kind, xn->data[i]);
    });
  }
  return out;
}

Tensor sum(GradTape* tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  out.set_requires_grad(x.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto xn = x.node();
    tape->record(on, [on, xn] {
      ensure_grad(xn.get());
      for (std::size_t i = 0; i < xn->data.size(); ++i)
        xn->grad[i] += on->grad[0];
    });
  }
  return out;
}

namespace {

// log(sum_j exp(z_j)) with max subtraction; also writes softmax into `sm`.
double softmax_and_lse(const double* z, std::size_t n, double* sm) {
  double zmax = z[0];
  for (std::size_t j = 1; j < n; ++j) zmax = std::max(zmax, z[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sm[j] = std::exp(z[j] - zmax);
    total += sm[j];
  }
  for (std::size_t j = 0; j < n; ++j) sm[j] /= total;
  return zmax + std::log(total);
}

}  // namespace

Tensor cross_entropy(GradTape* tape, const Tensor& logits, int label) {
  if (logits.cols() != 1 && logits.shape().size() != 1)
    throw std::invalid_argument("cross_entropy: logits must be a vector");
  const std::size_t y = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= y)
    throw std::out_of_range("cross_entropy: label out of range");
  for (double v : logits.values())
    if (!std::isfinite(v))
      throw std::invalid_argument("cross_entropy: non-finite logit");

  std::vector<double> sm(y);
  const double lse = softmax_and_lse(logits.values().data(), y, sm.data());
  Tensor out = Tensor::scalar(lse - logits.values()[label]);
  out.set_requires_grad(logits.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto ln = logits.node();
    tape->record(on, [on, ln, sm = std::move(sm), label] {
      ensure_grad(ln.get());
      const double g = on->grad[0];
      for (std::size_t j = 0; j < ln->data.size(); ++j)
        ln->grad[j] += g * (sm[j] - (static_cast<int>(j) == label ? 1.0 : 0.0));
    });
  }
  return out;
}

Tensor cross_entropy_mean(GradTape* tape, const Tensor& logits,
                          const std::vector<int>& labels) {
  const std::size_t y = logits.rows();
  const std::size_t batch = logits.cols();
  if (labels.size() != batch)
    throw std::invalid_argument("cross_entropy_mean: label count mismatch");
  for (int lb : labels)
    if (lb < 0 || static_cast<std::size_t>(lb) >= y)
      throw std::out_of_range("cross_entropy_mean: label out of range");

  // softmax per column, stored for backward
  std::vector<double> sm(y * batch);
  std::vector<double> col(y);
  double total_loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < y; ++j) col[j] = logits.values()[j * batch + b];
    std::vector<double> smcol(y);
    const double lse = softmax_and_lse(col.data(), y, smcol.data());
    total_loss += lse - col[static_cast<std::size_t>(labels[b])];
    for (std::size_t j = 0; j < y; ++j) sm[j * batch + b] = smcol[j];
  }
  Tensor out = Tensor::scalar(total_loss / static_cast<double>(batch));
  out.set_requires_grad(logits.requires_grad());
  if (tape && out.requires_grad()) {
    auto on = out.node();
    auto ln = logits.node();
    tape->record(on, [on, ln, sm = std::move(sm), labels, y, batch] {
      ensure_grad(ln.get());
      const double g = on->grad[0] / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        const auto lb = static_cast<std::size_t>(labels[b]);
        for (std::size_t j = 0; j < y; ++j)
          ln->grad[j * batch + b] +=
              g * (sm[j * batch + b] - (j == lb ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

}  // namespace attnlab
