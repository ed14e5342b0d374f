// The assembled recommendation model: patient encoder, medicine encoder,
// and decision head over one parameter registry, with the ablation
// variants wired in.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acdnet/data.hpp"
#include "acdnet/decision_head.hpp"
#include "acdnet/medicine_encoder.hpp"
#include "acdnet/optim.hpp"
#include "acdnet/patient_encoder.hpp"

namespace acdnet {

enum class Variant {
  Full,
  NoGraphs,    // w/o M_e, M_d
  NoMol,       // w/o M_mol
  NoAtt,       // self-attention pools replaced by mean
  NoSeqAtt,    // w/o seq_e_att
  NoSeqTr,     // w/o seq_e_tr
  Gru,         // Transformer encoder replaced by a GRU
  Rnn,         // Transformer encoder replaced by a simple RNN
  DirectOnly,  // w o_1: direct recommendation only
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
std::vector<Variant> all_variants();

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t atom_type_count = 8;
};

class AcdNet {
 public:
  AcdNet(const Vocab& vocab, const ModelConfig& cfg, Variant variant,
         std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  void set_graphs(const KnowledgeGraphs& graphs);

  // Rebuilds M from current parameters (constant graphs). Not used in
  // direct-only mode.
  MedicineMatrix build_medicine_matrix() const;
  bool needs_medicine_matrix() const { return !head_.direct_only(); }

  // History for predicting visit t of a record: visits 0..t with the
  // final visit's medications removed.
  static std::vector<Visit> history_for(const PatientRecord& rec,
                                        std::size_t t);

  struct VisitOutput {
    PatientState state;
    DecisionHead::Output head;
  };
  VisitOutput forward(const std::vector<Visit>& history,
                      const MedicineMatrix& m) const;

  const PatientEncoder& patient_encoder() const { return patient_; }
  const MedicineEncoder& medicine_encoder() const { return medicine_; }
  const DecisionHead& head() const { return head_; }

  // Config snapshot embedded in checkpoints; load_compatible verifies a
  // snapshot against this model and throws ConfigError on mismatch.
  std::string config_snapshot_json() const;
  static AcdNet from_snapshot_json(const std::string& json_text);

 private:
  Vocab vocab_;
  ModelConfig cfg_;
  Variant variant_;
  ParamRegistry params_;
  PatientEncoder patient_;
  MedicineEncoder medicine_;
  DecisionHead head_;
};

}  // namespace acdnet
