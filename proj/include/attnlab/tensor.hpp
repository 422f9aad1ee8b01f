#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace attnlab {

enum class Activation { kRelu, kGelu, kMish };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
double activation_value(Activation a, double x);
double activation_derivative(Activation a, double x);
// sup |sigma'| measured on a dense grid; feeds the stability calculators
double activation_lipschitz(Activation a);

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;
  std::int64_t node_id = -1;  // producing tape entry, -1 for leaves
};

// Value-semantic handle to a shared autodiff node. All data is row-major
// 64-bit; matrices of shape {rows, cols}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         bool requires_grad = false);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape,
                      bool requires_grad = false);

  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return size() == 1; }

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double& operator[](std::size_t i) { return node_->data[i]; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const;

  std::vector<double>& values() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();
  void accumulate_grad(const double* g, std::size_t n);

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse-mode tape. Operations append entries in execution order, which is
// a topological order of the graph by construction; backward() replays the
// entries exactly once in reverse, so gradient accumulation order is fixed
// and runs are reproducible.
class GradTape {
 public:
  struct Entry {
    std::shared_ptr<TensorNode> out;
    std::function<void()> backward;
  };

  // Returns the node id assigned to `out`.
  std::int64_t record(std::shared_ptr<TensorNode> out,
                      std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Intermediate
  // node gradients are reset first; leaf (parameter) gradients accumulate
  // across calls and are zeroed by the caller.
  void backward(const Tensor& loss);

  std::size_t num_entries() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

// Core differentiable operations. A null tape evaluates forward only.
Tensor matmul(GradTape* tape, const Tensor& a, const Tensor& b);
Tensor matmul_ex(GradTape* tape, const Tensor& a, bool trans_a,
                 const Tensor& b, bool trans_b);
Tensor add(GradTape* tape, const Tensor& a, const Tensor& b);
Tensor sub(GradTape* tape, const Tensor& a, const Tensor& b);
Tensor scale(GradTape* tape, const Tensor& a, double c);
Tensor activation(GradTape* tape, const Tensor& x, Activation kind);
Tensor sum(GradTape* tape, const Tensor& x);

// -log softmax(logits)[label]; logits is a length-Y vector.
Tensor cross_entropy(GradTape* tape, const Tensor& logits, int label);
// Mean cross-entropy over a batch of logit columns (Y x B).
Tensor cross_entropy_mean(GradTape* tape, const Tensor& logits,
                          const std::vector<int>& labels);

}  // namespace attnlab
