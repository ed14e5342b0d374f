#include "acdnet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace acdnet {

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamRegistry::add_uniform(const std::string& name, Shape shape,
                                  double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::zeros(shape, true);
  for (auto& v : t.data()) v = dist(rng);
  return add(name, t);
}

Tensor ParamRegistry::add_const(const std::string& name, Shape shape,
                                double value) {
  return add(name, Tensor::full(std::move(shape), value, true));
}

bool ParamRegistry::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

Tensor ParamRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("unknown parameter: " + name);
  return items_[it->second].second;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.size();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

void Adam::step(ParamRegistry& params) {
  for (const auto& [name, p] : params.items()) {
    Tensor t = p;  // shares the node; allows writing through the handle
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(t.size(), 0.0);
      st.v.assign(t.size(), 0.0);
    }
    st.t += 1;
    const auto& g = t.grad();
    auto& w = t.data();
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  params.zero_grad();
}

}  // namespace acdnet
