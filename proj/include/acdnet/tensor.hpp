// Dense float64 tensor with tape-based reverse-mode autodiff.
//
// Tensors are cheap shared handles onto graph nodes. Each differentiable
// op records its parents and a backprop closure; backward() runs the tape
// in reverse topological order. Rank is restricted to 1 or 2 (plus rank-0
// scalars produced by reductions) which covers everything the model needs.
// Broadcasting is deliberately narrow: scalar-with-tensor and
// row-with-matrix only.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace acdnet {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Thread-local switch; when off, ops compute values but record no tape.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool needs_grad = false;  // requires_grad or depends on something that does
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;

    std::vector<double>& grad_buf() {
      if (grad.empty()) grad.assign(data.size(), 0.0);
      return grad;
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  const std::vector<double>& grad() const { return node_->grad_buf(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  double operator()(std::size_t i) const { return node_->data.at(i); }
  double operator()(std::size_t i, std::size_t j) const {
    return node_->data.at(i * node_->shape.at(1) + j);
  }
  double item() const;

  std::shared_ptr<Node> node() const { return node_; }

  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Grads accumulate;
// call zero_grad between passes for fresh gradients.
void backward(const Tensor& loss);

// --- primitive ops -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// add/sub/mul: same shape, scalar-with-tensor, or row-with-matrix.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double k);

Tensor sum(const Tensor& x, int axis);   // rank-2 -> rank-1
Tensor mean(const Tensor& x, int axis);  // rank-2 -> rank-1
Tensor sum_all(const Tensor& x);         // -> scalar
Tensor mean_rows(const Tensor& x);       // rank-2 -> rank-1 mean over rows

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor stack_rows(const std::vector<Tensor>& rows);  // 1-D tensors -> N x D
Tensor row(const Tensor& x, std::size_t i);          // rank-2 -> rank-1 view copy
Tensor rows(const Tensor& x, const std::vector<std::size_t>& idx);  // gather
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor reshape_to_row(const Tensor& x);  // 1-D [D] -> [1 x D]
Tensor flatten(const Tensor& x);         // [1 x D] or [D] -> [D]

// cos(a, B[i]) per row; entries with a guarded-zero norm come out 0.
Tensor cosine_rows(const Tensor& a, const Tensor& b, double eps = 1e-8);

// out[i][j] = a[i] + b[j]
Tensor outer_sum(const Tensor& a, const Tensor& b);

// Row-wise softmax over entries where mask[i*m+j] != 0; others are 0.
// Every row must have at least one unmasked entry.
Tensor masked_row_softmax(const Tensor& scores, const std::vector<std::uint8_t>& mask);

// Summed binary cross entropy against a constant 0/1 target; probabilities
// clamped to [1e-12, 1 - 1e-12] before the logs.
Tensor bce_sum(const Tensor& probs, const std::vector<double>& target);

// Multi-label margin: sum over (i: y=1, j: y=0) of max(0, 1 - (o_i - o_j)),
// divided by the full label count. Zero positives or zero negatives -> 0.
Tensor margin_loss(const Tensor& probs, const std::vector<double>& target);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);

}  // namespace acdnet
