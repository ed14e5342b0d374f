#include "acdnet/decision_head.hpp"

#include <cmath>

namespace acdnet {

DecisionHead DecisionHead::init(ParamRegistry& reg, std::size_t dim,
                                std::size_t n_med, bool direct_only,
                                std::mt19937_64& rng) {
  DecisionHead h;
  h.direct_only_ = direct_only;
  auto lim = [](std::size_t fi, std::size_t fo) {
    return std::sqrt(6.0 / static_cast<double>(fi + fo));
  };
  h.o1_w_ = reg.add_uniform("head.o1.w", {dim, n_med}, lim(dim, n_med), rng);
  h.o1_b_ = reg.add_const("head.o1.b", {n_med}, 0.0);
  h.w1_ = reg.add_const("head.w1", {n_med}, 1.0);
  if (!direct_only) {
    h.o2_w_ = reg.add_uniform("head.o2.w", {2 * n_med, n_med},
                              lim(2 * n_med, n_med), rng);
    h.o2_b_ = reg.add_const("head.o2.b", {n_med}, 0.0);
    h.alpha_ = reg.add_const("head.alpha", {}, 1.0);
    h.beta_ = reg.add_const("head.beta", {}, 1.0);
    h.w2_ = reg.add_const("head.w2", {n_med}, 1.0);
  }
  return h;
}

Tensor DecisionHead::direct_scores(const Tensor& r_p) const {
  return add(matmul(r_p, o1_w_), o1_b_);
}

Tensor DecisionHead::history_similarity(const Tensor& r_m,
                                        const Tensor& m) const {
  return cosine_rows(r_m, m);
}

Tensor DecisionHead::indirect_scores(const Tensor& o1, const Tensor& s_m) const {
  Tensor cat = concat({mul(o1, alpha_), mul(s_m, beta_)}, 0);  // [2|Cm|]
  return add(matmul(cat, o2_w_), o2_b_);
}

Tensor DecisionHead::combine(const Tensor& o1, const Tensor& o2) const {
  return sigmoid(add(mul(w1_, o1), mul(w2_, o2)));
}

DecisionHead::Output DecisionHead::apply(const Tensor& r_p, const Tensor& r_m,
                                         const Tensor& medicine_matrix) const {
  Output out;
  out.o1 = direct_scores(r_p);
  if (direct_only_) {
    out.o_hat = sigmoid(mul(w1_, out.o1));
    return out;
  }
  out.s_m = history_similarity(r_m, medicine_matrix);
  out.o2 = indirect_scores(out.o1, out.s_m);
  out.o_hat = combine(out.o1, out.o2);
  return out;
}

std::vector<std::size_t> predict_set(const std::vector<double>& scores,
                                     double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= threshold) out.push_back(i);
  if (out.empty() && !scores.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    out.push_back(best);
  }
  return out;
}

}  // namespace acdnet
