// Slow reference implementations of the evaluation metrics, written
// directly from their set / ranking definitions so the production code can
// be checked against an independent formulation.

#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace oracle {

inline std::set<std::size_t> to_set(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

inline double jaccard(const std::vector<std::size_t>& pred,
                      const std::vector<std::size_t>& truth) {
  auto p = to_set(pred), t = to_set(truth);
  std::set<std::size_t> inter, uni;
  std::set_intersection(p.begin(), p.end(), t.begin(), t.end(),
                        std::inserter(inter, inter.begin()));
  std::set_union(p.begin(), p.end(), t.begin(), t.end(),
                 std::inserter(uni, uni.begin()));
  return uni.empty() ? 0.0 : double(inter.size()) / double(uni.size());
}

inline double f1(const std::vector<std::size_t>& pred,
                 const std::vector<std::size_t>& truth) {
  auto p = to_set(pred), t = to_set(truth);
  if (p.empty() || t.empty()) return 0.0;
  std::set<std::size_t> inter;
  std::set_intersection(p.begin(), p.end(), t.begin(), t.end(),
                        std::inserter(inter, inter.begin()));
  double prec = double(inter.size()) / double(p.size());
  double rec = double(inter.size()) / double(t.size());
  return prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
}

// Descending by score, ascending by index on equal scores.
inline std::vector<std::size_t> rank_order(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return idx;
}

inline double average_precision(const std::vector<double>& scores,
                                const std::vector<std::size_t>& truth) {
  auto t = to_set(truth);
  if (t.empty()) return 0.0;
  auto order = rank_order(scores);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (t.count(order[r])) {
      ++hits;
      sum += double(hits) / double(r + 1);
    }
  }
  return sum / double(t.size());
}

inline double precision_at(const std::vector<double>& scores,
                           const std::vector<std::size_t>& truth,
                           std::size_t k) {
  auto t = to_set(truth);
  if (t.empty()) return 0.0;
  auto order = rank_order(scores);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k; ++r) hits += t.count(order[r]);
  return double(hits) / double(k);
}

inline double ndcg_at(const std::vector<double>& scores,
                      const std::vector<std::size_t>& truth, std::size_t k) {
  auto t = to_set(truth);
  if (t.empty()) return 0.0;
  auto order = rank_order(scores);
  double dcg = 0.0;
  for (std::size_t r = 0; r < k; ++r)
    if (t.count(order[r])) dcg += 1.0 / std::log2(double(r) + 2.0);
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, t.size()); ++r)
    idcg += 1.0 / std::log2(double(r) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

inline double ddi_rate(const std::vector<std::vector<std::size_t>>& preds,
                       const std::vector<std::uint8_t>& ddi_adj,
                       std::size_t n_med) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& pred : preds) {
    if (pred.size() < 2) continue;
    double pairs = 0, bad = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (std::size_t j = 0; j < pred.size(); ++j) {
        if (i >= j) continue;
        pairs += 1;
        if (ddi_adj[pred[i] * n_med + pred[j]]) bad += 1;
      }
    sum += bad / pairs;
    ++used;
  }
  return used ? sum / double(used) : 0.0;
}

}  // namespace oracle
