// Collaborative decision head: direct scorer from the patient
// representation, indirect scorer from medication-history/medicine
// similarity, and the gated sigmoid blend.

#pragma once

#include <random>
#include <vector>

#include "acdnet/optim.hpp"
#include "acdnet/tensor.hpp"

namespace acdnet {

class DecisionHead {
 public:
  DecisionHead() = default;
  // direct_only wires the "w o_1" ablation: o_hat = sigmoid(w1 * o1).
  static DecisionHead init(ParamRegistry& reg, std::size_t dim,
                           std::size_t n_med, bool direct_only,
                           std::mt19937_64& rng);

  Tensor direct_scores(const Tensor& r_p) const;                    // o_1
  Tensor history_similarity(const Tensor& r_m, const Tensor& m) const;  // s_m
  Tensor indirect_scores(const Tensor& o1, const Tensor& s_m) const;    // o_2
  Tensor combine(const Tensor& o1, const Tensor& o2) const;             // o_hat

  struct Output {
    Tensor o1;
    Tensor s_m;    // undefined in direct-only mode
    Tensor o2;     // undefined in direct-only mode
    Tensor o_hat;  // strictly inside (0, 1)
  };
  // medicine_matrix may be undefined in direct-only mode.
  Output apply(const Tensor& r_p, const Tensor& r_m,
               const Tensor& medicine_matrix) const;

  bool direct_only() const { return direct_only_; }

 private:
  bool direct_only_ = false;
  Tensor o1_w_, o1_b_;  // dim x |Cm|, |Cm|
  Tensor o2_w_, o2_b_;  // 2|Cm| x |Cm|, |Cm|
  Tensor alpha_, beta_;  // scalars
  Tensor w1_, w2_;       // |Cm|
};

// Indices with score >= threshold; falls back to the single argmax index
// (lowest index on ties) when nothing clears the threshold.
std::vector<std::size_t> predict_set(const std::vector<double>& scores,
                                     double threshold = 0.5);

}  // namespace acdnet
