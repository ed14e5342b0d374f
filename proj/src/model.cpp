#include "acdnet/model.hpp"

#include "json.hpp"

namespace acdnet {

using nlohmann::json;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoGraphs: return "wo_graphs";
    case Variant::NoMol: return "wo_mol";
    case Variant::NoAtt: return "wo_att";
    case Variant::NoSeqAtt: return "wo_seq_att";
    case Variant::NoSeqTr: return "wo_seq_tr";
    case Variant::Gru: return "w_gru";
    case Variant::Rnn: return "w_rnn";
    case Variant::DirectOnly: return "w_o1";
  }
  throw std::invalid_argument("bad variant enum");
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : all_variants())
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant '" + name +
                    "' (expected one of: full, wo_graphs, wo_mol, wo_att, "
                    "wo_seq_att, wo_seq_tr, w_gru, w_rnn, w_o1)");
}

std::vector<Variant> all_variants() {
  return {Variant::Full,     Variant::NoGraphs, Variant::NoMol,
          Variant::NoAtt,    Variant::NoSeqAtt, Variant::NoSeqTr,
          Variant::Gru,      Variant::Rnn,      Variant::DirectOnly};
}

AcdNet::AcdNet(const Vocab& vocab, const ModelConfig& cfg, Variant variant,
               std::uint64_t seed)
    : vocab_(vocab), cfg_(cfg), variant_(variant) {
  cfg_.encoder.validate();
  std::mt19937_64 rng(seed);

  PatientEncoderOptions popts;
  popts.mean_pools = variant == Variant::NoAtt;
  popts.drop_seq_att = variant == Variant::NoSeqAtt;
  popts.drop_seq_tr = variant == Variant::NoSeqTr;
  if (variant == Variant::Gru) popts.recurrent = RecurrentKind::Gru;
  if (variant == Variant::Rnn) popts.recurrent = RecurrentKind::Rnn;
  patient_ = PatientEncoder::init(params_, vocab_, cfg_.encoder, popts, rng);

  bool direct_only = variant == Variant::DirectOnly;
  if (!direct_only) {
    MedicineEncoder::Options mopts;
    mopts.use_graphs = variant != Variant::NoGraphs;
    mopts.use_mol = variant != Variant::NoMol;
    medicine_ = MedicineEncoder::init(params_, vocab_.n_med, cfg_.encoder.dim,
                                      cfg_.encoder.heads, cfg_.atom_type_count,
                                      mopts, rng);
  }
  head_ = DecisionHead::init(params_, cfg_.encoder.dim, vocab_.n_med,
                             direct_only, rng);
}

void AcdNet::set_graphs(const KnowledgeGraphs& graphs) {
  if (!head_.direct_only()) medicine_.set_graphs(graphs);
}

MedicineMatrix AcdNet::build_medicine_matrix() const {
  return medicine_.build(patient_.medicine_table());
}

std::vector<Visit> AcdNet::history_for(const PatientRecord& rec,
                                       std::size_t t) {
  if (t >= rec.visits.size())
    throw std::out_of_range("visit index " + std::to_string(t) +
                            " out of range for patient " + rec.id);
  std::vector<Visit> history(rec.visits.begin(), rec.visits.begin() + t + 1);
  history.back().medications.clear();
  return history;
}

AcdNet::VisitOutput AcdNet::forward(const std::vector<Visit>& history,
                                    const MedicineMatrix& m) const {
  VisitOutput out;
  out.state = patient_.encode(history);
  out.head = head_.apply(out.state.r_p, out.state.r_m, m.fused);
  return out;
}

std::string AcdNet::config_snapshot_json() const {
  json j{{"vocab",
          {{"diagnoses", vocab_.n_diag},
           {"procedures", vocab_.n_proc},
           {"medications", vocab_.n_med}}},
         {"variant", variant_name(variant_)},
         {"encoder",
          {{"dim", cfg_.encoder.dim},
           {"heads", cfg_.encoder.heads},
           {"layers", cfg_.encoder.layers},
           {"ff_width", cfg_.encoder.ff_width},
           {"positional_encoding", cfg_.encoder.positional_encoding},
           {"dropout", cfg_.encoder.dropout}}},
         {"atom_type_count", cfg_.atom_type_count}};
  return j.dump();
}

AcdNet AcdNet::from_snapshot_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad checkpoint config snapshot: ") +
                      e.what());
  }
  Vocab vocab;
  vocab.n_diag = j.at("vocab").at("diagnoses");
  vocab.n_proc = j.at("vocab").at("procedures");
  vocab.n_med = j.at("vocab").at("medications");
  ModelConfig cfg;
  const auto& e = j.at("encoder");
  cfg.encoder.dim = e.at("dim");
  cfg.encoder.heads = e.at("heads");
  cfg.encoder.layers = e.at("layers");
  cfg.encoder.ff_width = e.at("ff_width");
  cfg.encoder.positional_encoding = e.at("positional_encoding");
  cfg.encoder.dropout = e.at("dropout");
  cfg.atom_type_count = j.at("atom_type_count");
  Variant variant = variant_from_name(j.at("variant"));
  return AcdNet(vocab, cfg, variant, /*seed=*/0);
}

}  // namespace acdnet
