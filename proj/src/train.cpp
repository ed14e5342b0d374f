#include "acdnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace acdnet {

Tensor combined_loss(const Tensor& o_hat, const std::vector<std::size_t>& truth,
                     std::size_t n_med, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("lambda must be in [0, 1]");
  std::vector<double> target(n_med, 0.0);
  for (auto m : truth) target.at(m) = 1.0;
  if (lambda == 1.0) return bce_sum(o_hat, target);
  if (lambda == 0.0) return margin_loss(o_hat, target);
  return add(scale(bce_sum(o_hat, target), lambda),
             scale(margin_loss(o_hat, target), 1.0 - lambda));
}

namespace {

// Loss summed over every visit of one patient; the medicine matrix is
// built once per patient since parameters only change between patients.
Tensor patient_loss(const AcdNet& model, const PatientRecord& rec,
                    const MedicineMatrix& m, double lambda) {
  std::size_t n_med = model.vocab().n_med;
  Tensor total;
  for (std::size_t t = 0; t < rec.visits.size(); ++t) {
    auto history = AcdNet::history_for(rec, t);
    auto out = model.forward(history, m);
    Tensor l = combined_loss(out.head.o_hat, rec.visits[t].medications, n_med,
                             lambda);
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

std::vector<std::vector<double>> snapshot_params(const ParamRegistry& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.count());
  for (const auto& [name, t] : params.items()) snap.push_back(t.data());
  return snap;
}

void restore_params(ParamRegistry& params,
                    const std::vector<std::vector<double>>& snap) {
  std::size_t i = 0;
  for (const auto& [name, t] : params.items()) {
    Tensor handle = t;  // shares the underlying node
    handle.data() = snap[i++];
  }
}

}  // namespace

double train_epoch(AcdNet& model, const std::vector<PatientRecord>& patients,
                   Adam& opt, const TrainConfig& cfg, std::size_t epoch) {
  std::vector<std::size_t> order(patients.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed * 2654435761u + epoch + 1);
  std::shuffle(order.begin(), order.end(), rng);

  double total = 0.0;
  std::size_t visits = 0;
  for (std::size_t pi : order) {
    const auto& rec = patients[pi];
    MedicineMatrix m;
    if (model.needs_medicine_matrix()) m = model.build_medicine_matrix();
    Tensor loss = patient_loss(model, rec, m, cfg.lambda);
    double value = loss.item();
    if (!std::isfinite(value))
      throw NumericError("training loss is not finite (patient " + rec.id +
                         ", epoch " + std::to_string(epoch) + ")");
    total += value;
    visits += rec.visits.size();
    backward(loss);
    if (!cfg.step_per_epoch) opt.step(model.params());
  }
  if (cfg.step_per_epoch) opt.step(model.params());
  return visits ? total / static_cast<double>(visits) : 0.0;
}

std::vector<VisitScores> score_patients(
    const AcdNet& model, const std::vector<PatientRecord>& patients) {
  NoGradGuard no_grad;
  MedicineMatrix m;
  if (model.needs_medicine_matrix()) m = model.build_medicine_matrix();
  std::vector<VisitScores> out;
  for (const auto& rec : patients) {
    for (std::size_t t = 0; t < rec.visits.size(); ++t) {
      auto history = AcdNet::history_for(rec, t);
      auto fwd = model.forward(history, m);
      out.push_back({fwd.head.o_hat.data(), rec.visits[t].medications});
    }
  }
  return out;
}

MetricValues evaluate_split(const AcdNet& model,
                            const std::vector<PatientRecord>& patients,
                            const KnowledgeGraphs& graphs, double threshold) {
  auto visits = score_patients(model, patients);
  return evaluate_visits(visits, graphs.ddi_adj, graphs.n_med, threshold);
}

double EvalReport::mean_of(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e.mean;
  throw std::invalid_argument("no metric named " + name + " in report");
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "bootstrap: " << rounds << " rounds, " << sample_size << "/"
     << patients << " patients per round\n";
  for (const auto& e : entries) {
    os << "  " << e.name;
    for (std::size_t pad = e.name.size(); pad < 14; ++pad) os << ' ';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f +/- %.4f", e.mean, e.stddev);
    os << buf << "\n";
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j{{"rounds", rounds},
                   {"fraction", fraction},
                   {"patients", patients},
                   {"sample_size", sample_size}};
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& e : entries)
    metrics[e.name] = {{"mean", e.mean}, {"std", e.stddev}};
  j["metrics"] = metrics;
  return j.dump(2);
}

EvalReport bootstrap_eval(const AcdNet& model,
                          const std::vector<PatientRecord>& patients,
                          const KnowledgeGraphs& graphs, std::size_t rounds,
                          double fraction, std::uint64_t seed,
                          double threshold) {
  if (rounds == 0) throw ConfigError("bootstrap rounds must be >= 1");
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("bootstrap fraction must be in (0, 1]");
  std::size_t n = patients.size();
  auto sample_size = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n)));
  if (sample_size == 0)
    throw ConfigError("bootstrap sample would be empty");

  // Score every visit once; rounds only reshuffle which patients count.
  std::vector<std::vector<VisitScores>> per_patient(n);
  {
    NoGradGuard no_grad;
    MedicineMatrix m;
    if (model.needs_medicine_matrix()) m = model.build_medicine_matrix();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& rec = patients[i];
      for (std::size_t t = 0; t < rec.visits.size(); ++t) {
        auto fwd = model.forward(AcdNet::history_for(rec, t), m);
        per_patient[i].push_back(
            {fwd.head.o_hat.data(), rec.visits[t].medications});
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto& names = metric_names();
  std::vector<std::vector<double>> samples(names.size());

  for (std::size_t r = 0; r < rounds; ++r) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<VisitScores> visits;
    for (std::size_t i = 0; i < sample_size; ++i)
      for (const auto& v : per_patient[idx[i]]) visits.push_back(v);
    MetricValues m = evaluate_visits(visits, graphs.ddi_adj, graphs.n_med,
                                     threshold);
    for (std::size_t k = 0; k < names.size(); ++k)
      samples[k].push_back(m.by_name(names[k]));
  }

  EvalReport report;
  report.rounds = rounds;
  report.fraction = fraction;
  report.patients = n;
  report.sample_size = sample_size;
  for (std::size_t k = 0; k < names.size(); ++k) {
    double mean = std::accumulate(samples[k].begin(), samples[k].end(), 0.0) /
                  static_cast<double>(rounds);
    double var = 0.0;
    for (double s : samples[k]) var += (s - mean) * (s - mean);
    var /= static_cast<double>(rounds);
    report.entries.push_back({names[k], mean, std::sqrt(var)});
  }
  return report;
}

TrainResult train_model(AcdNet& model, const Split& split,
                        const KnowledgeGraphs& graphs, const TrainConfig& cfg,
                        std::ostream* log) {
  Adam opt(cfg.lr);
  TrainResult result;
  std::vector<std::vector<double>> best;
  double best_jaccard = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss = train_epoch(model, split.train, opt, cfg, epoch);
    result.train_loss.push_back(loss);
    MetricValues val =
        evaluate_split(model, split.val, graphs, cfg.threshold);
    result.val_metrics.push_back(val);
    if (val.jaccard > best_jaccard) {
      best_jaccard = val.jaccard;
      result.best_epoch = epoch;
      best = snapshot_params(model.params());
    }
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "epoch %3zu  loss %.4f  val jaccard %.4f  f1 %.4f  "
                    "prauc %.4f",
                    epoch, loss, val.jaccard, val.f1, val.prauc);
      *log << buf << std::endl;
    }
  }
  if (!best.empty()) restore_params(model.params(), best);
  result.best_val_jaccard = best_jaccard;
  if (log)
    *log << "best epoch " << result.best_epoch << " (val jaccard "
         << best_jaccard << ")" << std::endl;
  return result;
}

}  // namespace acdnet
