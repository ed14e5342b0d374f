#include "acdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "acdnet/decision_head.hpp"

namespace acdnet {

namespace {
std::size_t intersection_size(const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
  std::set<std::size_t> sa(a.begin(), a.end());
  std::size_t n = 0;
  std::set<std::size_t> sb(b.begin(), b.end());
  for (auto x : sb) n += sa.count(x);
  return n;
}

// Indices sorted by score descending, index ascending on ties.
std::vector<std::size_t> ranking(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return idx;
}
}  // namespace

double metric_jaccard(const std::vector<std::size_t>& pred,
                      const std::vector<std::size_t>& truth) {
  std::set<std::size_t> sp(pred.begin(), pred.end());
  std::set<std::size_t> st(truth.begin(), truth.end());
  std::size_t inter = intersection_size(pred, truth);
  std::size_t uni = sp.size() + st.size() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double metric_f1(const std::vector<std::size_t>& pred,
                 const std::vector<std::size_t>& truth) {
  std::set<std::size_t> sp(pred.begin(), pred.end());
  std::set<std::size_t> st(truth.begin(), truth.end());
  if (sp.empty() || st.empty()) return 0.0;
  std::size_t inter = intersection_size(pred, truth);
  double p = static_cast<double>(inter) / sp.size();
  double r = static_cast<double>(inter) / st.size();
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<std::size_t>& truth) {
  if (truth.empty()) return 0.0;
  std::set<std::size_t> st(truth.begin(), truth.end());
  auto order = ranking(scores);
  double hits = 0.0, ap = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (st.count(order[rank])) {
      hits += 1.0;
      ap += hits / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(st.size());
}

std::pair<double, double> metric_topk(const std::vector<double>& scores,
                                      const std::vector<std::size_t>& truth,
                                      std::size_t k) {
  if (k == 0 || k > scores.size())
    throw std::invalid_argument("metric_topk: k must be in [1, |scores|]");
  if (truth.empty()) return {0.0, 0.0};
  std::set<std::size_t> st(truth.begin(), truth.end());
  auto order = ranking(scores);
  double hits = 0.0, dcg = 0.0;
  for (std::size_t rank = 0; rank < k; ++rank) {
    if (st.count(order[rank])) {
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
    }
  }
  double idcg = 0.0;
  std::size_t ideal = std::min(k, st.size());
  for (std::size_t rank = 0; rank < ideal; ++rank)
    idcg += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
  return {hits / static_cast<double>(k), idcg > 0.0 ? dcg / idcg : 0.0};
}

double metric_ddi_rate(const std::vector<std::vector<std::size_t>>& pred_sets,
                       const std::vector<std::uint8_t>& ddi_adj,
                       std::size_t n_med) {
  double total = 0.0;
  std::size_t contributing = 0;
  for (const auto& pred : pred_sets) {
    if (pred.size() < 2) continue;
    std::size_t pairs = 0, bad = 0;
    for (std::size_t a = 0; a < pred.size(); ++a)
      for (std::size_t b = a + 1; b < pred.size(); ++b) {
        ++pairs;
        if (ddi_adj[pred[a] * n_med + pred[b]]) ++bad;
      }
    total += static_cast<double>(bad) / static_cast<double>(pairs);
    ++contributing;
  }
  return contributing ? total / static_cast<double>(contributing) : 0.0;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "jaccard", "prauc",        "f1",      "ddi_rate", "avg_med",
      "precision@5", "precision@10", "ndcg@5", "ndcg@10"};
  return names;
}

double MetricValues::by_name(const std::string& name) const {
  if (name == "jaccard") return jaccard;
  if (name == "prauc") return prauc;
  if (name == "f1") return f1;
  if (name == "ddi_rate") return ddi_rate;
  if (name == "avg_med") return avg_med;
  if (name == "precision@5") return p_at_5;
  if (name == "precision@10") return p_at_10;
  if (name == "ndcg@5") return ndcg_at_5;
  if (name == "ndcg@10") return ndcg_at_10;
  throw std::invalid_argument("unknown metric " + name);
}

MetricValues evaluate_visits(const std::vector<VisitScores>& visits,
                             const std::vector<std::uint8_t>& ddi_adj,
                             std::size_t n_med, double threshold) {
  if (visits.empty())
    throw std::invalid_argument("evaluate_visits: no visits");
  MetricValues m;
  std::vector<std::vector<std::size_t>> pred_sets;
  for (const auto& v : visits) {
    auto pred = predict_set(v.scores, threshold);
    m.jaccard += metric_jaccard(pred, v.truth);
    m.f1 += metric_f1(pred, v.truth);
    m.prauc += average_precision(v.scores, v.truth);
    m.avg_med += static_cast<double>(pred.size());
    auto [p5, n5] = metric_topk(v.scores, v.truth, std::min<std::size_t>(5, v.scores.size()));
    auto [p10, n10] =
        metric_topk(v.scores, v.truth, std::min<std::size_t>(10, v.scores.size()));
    m.p_at_5 += p5;
    m.p_at_10 += p10;
    m.ndcg_at_5 += n5;
    m.ndcg_at_10 += n10;
    pred_sets.push_back(std::move(pred));
  }
  double n = static_cast<double>(visits.size());
  m.jaccard /= n;
  m.f1 /= n;
  m.prauc /= n;
  m.avg_med /= n;
  m.p_at_5 /= n;
  m.p_at_10 /= n;
  m.ndcg_at_5 /= n;
  m.ndcg_at_10 /= n;
  m.ddi_rate = metric_ddi_rate(pred_sets, ddi_adj, n_med);
  return m;
}

}  // namespace acdnet
