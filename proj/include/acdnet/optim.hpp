// Named parameter registry and the Adam optimizer.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "acdnet/tensor.hpp"

namespace acdnet {

// Ordered map name -> trainable tensor. Iteration follows insertion order
// so updates and checkpoints are deterministic.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t);
  // Registers a tensor initialized uniformly in [-limit, limit].
  Tensor add_uniform(const std::string& name, Shape shape, double limit,
                     std::mt19937_64& rng);
  Tensor add_const(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;

  std::size_t count() const { return items_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Adam with bias correction. Moment state persists per parameter name;
// step() applies the update and then zeroes all gradients.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamRegistry& params);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  struct State {
    std::int64_t t = 0;
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<std::string, State> state_;
};

}  // namespace acdnet
