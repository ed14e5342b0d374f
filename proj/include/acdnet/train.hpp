// Training loop, combined loss, split evaluation, and the bootstrap
// evaluation report.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "acdnet/metrics.hpp"
#include "acdnet/model.hpp"

namespace acdnet {

struct TrainConfig {
  double lambda = 0.97;  // BCE weight; margin loss gets 1 - lambda
  double lr = 0.0015;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  bool step_per_epoch = false;  // one optimizer step per epoch instead of
                                // one per patient
};

// lambda * summed-BCE + (1 - lambda) * margin loss for one visit. At the
// boundaries the zero-weighted term is skipped entirely, so lambda == 1
// reproduces the pure BCE path bit for bit (and lambda == 0 the margin
// path).
Tensor combined_loss(const Tensor& o_hat, const std::vector<std::size_t>& truth,
                     std::size_t n_med, double lambda);

// One pass over the training patients in shuffled order; returns the mean
// per-visit loss. Throws NumericError if the loss goes non-finite.
double train_epoch(AcdNet& model, const std::vector<PatientRecord>& patients,
                   Adam& opt, const TrainConfig& cfg, std::size_t epoch);

// Scores every visit of every patient with gradients off; one entry per
// visit, patient-major order.
std::vector<VisitScores> score_patients(
    const AcdNet& model, const std::vector<PatientRecord>& patients);

MetricValues evaluate_split(const AcdNet& model,
                            const std::vector<PatientRecord>& patients,
                            const KnowledgeGraphs& graphs, double threshold);

struct BootstrapEntry {
  std::string name;
  double mean = 0;
  double stddev = 0;
};

struct EvalReport {
  std::size_t rounds = 0;
  double fraction = 0;
  std::size_t patients = 0;
  std::size_t sample_size = 0;
  std::vector<BootstrapEntry> entries;

  double mean_of(const std::string& name) const;
  std::string to_text() const;
  std::string to_json() const;
};

// Metrics over `rounds` resamples of floor(fraction * N) patients drawn
// without replacement; mean and population standard deviation per metric.
// Visit scores are computed once and shared across rounds.
EvalReport bootstrap_eval(const AcdNet& model,
                          const std::vector<PatientRecord>& patients,
                          const KnowledgeGraphs& graphs, std::size_t rounds,
                          double fraction, std::uint64_t seed,
                          double threshold);

struct TrainResult {
  std::vector<double> train_loss;          // per epoch
  std::vector<MetricValues> val_metrics;   // per epoch
  std::size_t best_epoch = 0;              // by validation Jaccard
  double best_val_jaccard = 0;
};

// Trains in place, tracking the best validation Jaccard; the model is left
// holding the best epoch's parameters. Progress lines go to `log` when
// given.
TrainResult train_model(AcdNet& model, const Split& split,
                        const KnowledgeGraphs& graphs, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

}  // namespace acdnet
