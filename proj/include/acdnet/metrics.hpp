// Per-visit recommendation metrics and their aggregation.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace acdnet {

struct VisitScores {
  std::vector<double> scores;       // one per medicine
  std::vector<std::size_t> truth;   // ground-truth medication indices
};

double metric_jaccard(const std::vector<std::size_t>& pred,
                      const std::vector<std::size_t>& truth);
double metric_f1(const std::vector<std::size_t>& pred,
                 const std::vector<std::size_t>& truth);

// Average precision of the score ranking against the binary truth vector;
// ties broken by ascending index, 0 when the truth set is empty.
double average_precision(const std::vector<double>& scores,
                         const std::vector<std::size_t>& truth);

// (precision@k, nDCG@k) with binary relevance; 0/0 when truth is empty.
std::pair<double, double> metric_topk(const std::vector<double>& scores,
                                      const std::vector<std::size_t>& truth,
                                      std::size_t k);

// Fraction of unordered predicted pairs that are DDI edges; visits with
// fewer than two predictions are skipped.
double metric_ddi_rate(const std::vector<std::vector<std::size_t>>& pred_sets,
                       const std::vector<std::uint8_t>& ddi_adj,
                       std::size_t n_med);

struct MetricValues {
  double jaccard = 0, prauc = 0, f1 = 0, ddi_rate = 0, avg_med = 0;
  double p_at_5 = 0, p_at_10 = 0, ndcg_at_5 = 0, ndcg_at_10 = 0;
  double by_name(const std::string& name) const;
};

// All metric names in report order.
const std::vector<std::string>& metric_names();

MetricValues evaluate_visits(const std::vector<VisitScores>& visits,
                             const std::vector<std::uint8_t>& ddi_adj,
                             std::size_t n_med, double threshold = 0.5);

}  // namespace acdnet
