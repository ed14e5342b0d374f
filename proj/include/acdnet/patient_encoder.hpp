// Patient-side encoding: per-visit embeddings, local self-attention
// pooling, global Transformer (or recurrent, for ablations) encoding, and
// the pooled health / medication-history representations.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "acdnet/data.hpp"
#include "acdnet/optim.hpp"
#include "acdnet/tensor.hpp"

namespace acdnet {

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t heads = 8;
  std::size_t layers = 6;
  std::size_t ff_width = 0;  // 0 -> 4 * dim
  bool positional_encoding = true;
  double dropout = 0.0;

  std::size_t ff() const { return ff_width ? ff_width : 4 * dim; }
  std::size_t head_dim() const { return dim / heads; }
  void validate() const;
};

// softmax(tanh(v W1) W2)^T v over an L x dim sequence. With
// mean_fallback the pool degrades to a plain row mean (the "all
// self-attention to mean" ablation).
struct SelfAttentionPool {
  Tensor w1;  // dim x dim
  Tensor w2;  // dim x 1
  bool mean_fallback = false;

  static SelfAttentionPool init(ParamRegistry& reg, const std::string& prefix,
                                std::size_t dim, std::mt19937_64& rng);

  struct Result {
    Tensor pooled;   // [dim]
    Tensor weights;  // [L], nonnegative, sums to 1
  };
  Result apply(const Tensor& seq) const;
};

struct TransformerLayer {
  Tensor wq, wk, wv, wo;      // dim x dim
  Tensor ln1_g, ln1_b;        // dim
  Tensor ff_w1, ff_b1;        // dim x ff, ff
  Tensor ff_w2, ff_b2;        // ff x dim, dim
  Tensor ln2_g, ln2_b;        // dim
};

// Post-norm encoder stack; the final output is a layer norm over the input
// plus the sum of every layer's output.
struct TransformerEncoder {
  EncoderConfig cfg;
  std::vector<TransformerLayer> layers;
  Tensor final_g, final_b;

  static TransformerEncoder init(ParamRegistry& reg, const std::string& prefix,
                                 const EncoderConfig& cfg,
                                 std::mt19937_64& rng);

  // attn_out, when given, collects each layer's per-head attention
  // matrices (rows sum to 1).
  Tensor encode(const Tensor& seq, std::vector<Tensor>* attn_out = nullptr,
                std::mt19937_64* dropout_rng = nullptr) const;
};

// Sinusoidal positional encoding table, rows 0..len-1.
Tensor positional_encoding(std::size_t len, std::size_t dim);

enum class RecurrentKind { Rnn, Gru };

// Single-layer recurrent stand-in for the Transformer encoder used by the
// "w GRU" / "w RNN" ablations; the final hidden state is broadcast to
// every output position.
struct RecurrentEncoder {
  RecurrentKind kind = RecurrentKind::Gru;
  std::size_t dim = 0;
  Tensor wx, wh, b;            // RNN
  Tensor wxz, whz, bz;         // GRU update gate
  Tensor wxr, whr, br;         // GRU reset gate
  Tensor wxh, whh, bh;         // GRU candidate

  static RecurrentEncoder init(ParamRegistry& reg, const std::string& prefix,
                               RecurrentKind kind, std::size_t dim,
                               std::mt19937_64& rng);
  Tensor encode(const Tensor& seq) const;
};

struct PatientState {
  Tensor seq_e_att;  // T x dim
  Tensor seq_e_ave;  // T x dim
  Tensor seq_e_tr;   // T x dim
  std::optional<Tensor> seq_m;     // (T-1) x dim, absent when T == 1
  std::optional<Tensor> seq_m_tr;  // (T-1) x dim
  Tensor r_p;  // dim
  Tensor r_m;  // dim (learned no-history vector when T == 1)
  std::vector<Tensor> visit_pool_weights;  // per-visit Eq-1 weights
  Tensor patient_pool_weights;
};

struct PatientEncoderOptions {
  bool mean_pools = false;    // w/o att
  bool drop_seq_att = false;  // w/o seq_e_att
  bool drop_seq_tr = false;   // w/o seq_e_tr
  std::optional<RecurrentKind> recurrent;  // w GRU / w RNN
};

class PatientEncoder {
 public:
  PatientEncoder() = default;
  static PatientEncoder init(ParamRegistry& reg, const Vocab& vocab,
                             const EncoderConfig& cfg,
                             const PatientEncoderOptions& opts,
                             std::mt19937_64& rng);

  // e_t (l x dim) and its row mean for one visit; include_meds selects
  // whether the medication block participates (off for the current visit).
  struct VisitEmbedding {
    Tensor e;      // l x dim
    Tensor e_ave;  // dim
  };
  VisitEmbedding embed_visit(const Visit& v, bool include_meds) const;

  // history: visits 1..T in order; the final visit's medications are
  // ignored (they are the prediction target).
  PatientState encode(const std::vector<Visit>& history) const;

  const Tensor& medicine_table() const { return embed_med_; }
  const EncoderConfig& config() const { return cfg_; }
  const PatientEncoderOptions& options() const { return opts_; }
  const TransformerEncoder& visit_encoder() const { return enc_visit_; }
  const SelfAttentionPool& visit_pool() const { return pool_visit_; }

 private:
  Tensor encode_sequence(const TransformerEncoder& enc,
                         const RecurrentEncoder& rec, const Tensor& seq) const;

  EncoderConfig cfg_;
  PatientEncoderOptions opts_;
  Tensor embed_diag_, embed_proc_, embed_med_;
  SelfAttentionPool pool_visit_, pool_patient_, pool_medrec_;
  TransformerEncoder enc_visit_, enc_med_;
  RecurrentEncoder rec_visit_, rec_med_;
  Tensor no_history_;
};

}  // namespace acdnet
