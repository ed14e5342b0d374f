#include "acdnet/patient_encoder.hpp"

#include <cmath>

namespace acdnet {

namespace {
double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}
}  // namespace

void EncoderConfig::validate() const {
  if (dim == 0 || heads == 0 || layers == 0)
    throw ConfigError("encoder dim/heads/layers must be >= 1");
  if (dim % heads != 0)
    throw ConfigError("embedding dim " + std::to_string(dim) +
                      " not divisible by " + std::to_string(heads) + " heads");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0, 1)");
}

SelfAttentionPool SelfAttentionPool::init(ParamRegistry& reg,
                                          const std::string& prefix,
                                          std::size_t dim,
                                          std::mt19937_64& rng) {
  SelfAttentionPool p;
  p.w1 = reg.add_uniform(prefix + ".w1", {dim, dim}, xavier_limit(dim, dim),
                         rng);
  p.w2 = reg.add_uniform(prefix + ".w2", {dim, 1}, xavier_limit(dim, 1), rng);
  return p;
}

SelfAttentionPool::Result SelfAttentionPool::apply(const Tensor& seq) const {
  if (seq.rank() != 2 || seq.dim(0) == 0)
    throw ShapeError("self-attention pool needs a nonempty L x dim sequence");
  std::size_t l = seq.dim(0);
  if (mean_fallback) {
    Tensor w = Tensor::full({l}, 1.0 / static_cast<double>(l));
    return {mean_rows(seq), w};
  }
  Tensor logits = flatten(matmul(tanh(matmul(seq, w1)), w2));  // [L]
  Tensor weights = softmax(logits, 0);
  Tensor pooled = flatten(matmul(reshape_to_row(weights), seq));
  return {pooled, weights};
}

Tensor positional_encoding(std::size_t len, std::size_t dim) {
  std::vector<double> pe(len * dim);
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, 2.0 * static_cast<double>(i / 2) /
                                           static_cast<double>(dim));
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({len, dim}, std::move(pe));
}

TransformerEncoder TransformerEncoder::init(ParamRegistry& reg,
                                            const std::string& prefix,
                                            const EncoderConfig& cfg,
                                            std::mt19937_64& rng) {
  cfg.validate();
  TransformerEncoder enc;
  enc.cfg = cfg;
  std::size_t d = cfg.dim, f = cfg.ff();
  double wl = xavier_limit(d, d);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    std::string lp = prefix + ".layer" + std::to_string(i);
    TransformerLayer layer;
    layer.wq = reg.add_uniform(lp + ".wq", {d, d}, wl, rng);
    layer.wk = reg.add_uniform(lp + ".wk", {d, d}, wl, rng);
    layer.wv = reg.add_uniform(lp + ".wv", {d, d}, wl, rng);
    layer.wo = reg.add_uniform(lp + ".wo", {d, d}, wl, rng);
    layer.ln1_g = reg.add_const(lp + ".ln1.g", {d}, 1.0);
    layer.ln1_b = reg.add_const(lp + ".ln1.b", {d}, 0.0);
    layer.ff_w1 = reg.add_uniform(lp + ".ff.w1", {d, f}, xavier_limit(d, f),
                                  rng);
    layer.ff_b1 = reg.add_const(lp + ".ff.b1", {f}, 0.0);
    layer.ff_w2 = reg.add_uniform(lp + ".ff.w2", {f, d}, xavier_limit(f, d),
                                  rng);
    layer.ff_b2 = reg.add_const(lp + ".ff.b2", {d}, 0.0);
    layer.ln2_g = reg.add_const(lp + ".ln2.g", {d}, 1.0);
    layer.ln2_b = reg.add_const(lp + ".ln2.b", {d}, 0.0);
    enc.layers.push_back(std::move(layer));
  }
  enc.final_g = reg.add_const(prefix + ".final_ln.g", {d}, 1.0);
  enc.final_b = reg.add_const(prefix + ".final_ln.b", {d}, 0.0);
  return enc;
}

namespace {
Tensor apply_dropout(const Tensor& x, double p, std::mt19937_64* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Tensor mask = Tensor::zeros(x.shape());
  for (auto& v : mask.data()) v = keep(*rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, mask);
}
}  // namespace

Tensor TransformerEncoder::encode(const Tensor& seq,
                                  std::vector<Tensor>* attn_out,
                                  std::mt19937_64* dropout_rng) const {
  if (seq.rank() != 2 || seq.dim(1) != cfg.dim || seq.dim(0) == 0)
    throw ShapeError("encoder expects S x dim input, got " +
                     shape_str(seq.shape()));
  std::size_t dk = cfg.head_dim();
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor x = cfg.positional_encoding
                 ? add(seq, positional_encoding(seq.dim(0), cfg.dim))
                 : seq;
  Tensor input = x;
  Tensor acc;
  for (const auto& layer : layers) {
    Tensor q = matmul(x, layer.wq);
    Tensor k = matmul(x, layer.wk);
    Tensor v = matmul(x, layer.wv);
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
      Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
      Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
      Tensor attn =
          softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dk), 1);
      if (attn_out) attn_out->push_back(attn);
      heads.push_back(matmul(attn, vh));
    }
    Tensor mha = matmul(concat(heads, 1), layer.wo);
    mha = apply_dropout(mha, cfg.dropout, dropout_rng);
    Tensor z = layernorm(add(mha, x), layer.ln1_g, layer.ln1_b);
    Tensor ff = add(matmul(relu(add(matmul(z, layer.ff_w1), layer.ff_b1)),
                           layer.ff_w2),
                    layer.ff_b2);
    ff = apply_dropout(ff, cfg.dropout, dropout_rng);
    Tensor f = layernorm(add(ff, z), layer.ln2_g, layer.ln2_b);
    acc = acc.defined() ? add(acc, f) : f;
    x = f;
  }
  return layernorm(add(input, acc), final_g, final_b);
}

RecurrentEncoder RecurrentEncoder::init(ParamRegistry& reg,
                                        const std::string& prefix,
                                        RecurrentKind kind, std::size_t dim,
                                        std::mt19937_64& rng) {
  RecurrentEncoder r;
  r.kind = kind;
  r.dim = dim;
  double wl = xavier_limit(dim, dim);
  if (kind == RecurrentKind::Rnn) {
    r.wx = reg.add_uniform(prefix + ".wx", {dim, dim}, wl, rng);
    r.wh = reg.add_uniform(prefix + ".wh", {dim, dim}, wl, rng);
    r.b = reg.add_const(prefix + ".b", {dim}, 0.0);
  } else {
    r.wxz = reg.add_uniform(prefix + ".wxz", {dim, dim}, wl, rng);
    r.whz = reg.add_uniform(prefix + ".whz", {dim, dim}, wl, rng);
    r.bz = reg.add_const(prefix + ".bz", {dim}, 0.0);
    r.wxr = reg.add_uniform(prefix + ".wxr", {dim, dim}, wl, rng);
    r.whr = reg.add_uniform(prefix + ".whr", {dim, dim}, wl, rng);
    r.br = reg.add_const(prefix + ".br", {dim}, 0.0);
    r.wxh = reg.add_uniform(prefix + ".wxh", {dim, dim}, wl, rng);
    r.whh = reg.add_uniform(prefix + ".whh", {dim, dim}, wl, rng);
    r.bh = reg.add_const(prefix + ".bh", {dim}, 0.0);
  }
  return r;
}

Tensor RecurrentEncoder::encode(const Tensor& seq) const {
  if (seq.rank() != 2 || seq.dim(1) != dim || seq.dim(0) == 0)
    throw ShapeError("recurrent encoder expects S x dim input");
  std::size_t s = seq.dim(0);
  Tensor h = Tensor::zeros({dim});
  for (std::size_t t = 0; t < s; ++t) {
    Tensor xt = row(seq, t);
    if (kind == RecurrentKind::Rnn) {
      h = tanh(add(add(matmul(xt, wx), matmul(h, wh)), b));
    } else {
      Tensor z = sigmoid(add(add(matmul(xt, wxz), matmul(h, whz)), bz));
      Tensor r = sigmoid(add(add(matmul(xt, wxr), matmul(h, whr)), br));
      Tensor cand = tanh(add(add(matmul(xt, wxh), matmul(mul(r, h), whh)), bh));
      Tensor one_minus_z = sub(Tensor::full({dim}, 1.0), z);
      h = add(mul(one_minus_z, h), mul(z, cand));
    }
  }
  std::vector<Tensor> out(s, h);
  return stack_rows(out);
}

PatientEncoder PatientEncoder::init(ParamRegistry& reg, const Vocab& vocab,
                                    const EncoderConfig& cfg,
                                    const PatientEncoderOptions& opts,
                                    std::mt19937_64& rng) {
  cfg.validate();
  PatientEncoder pe;
  pe.cfg_ = cfg;
  pe.opts_ = opts;
  std::size_t d = cfg.dim;
  double el = xavier_limit(1, d);  // embedding rows
  pe.embed_diag_ = reg.add_uniform("embed.diag", {vocab.n_diag, d}, el, rng);
  pe.embed_proc_ = reg.add_uniform("embed.proc", {vocab.n_proc, d}, el, rng);
  pe.embed_med_ = reg.add_uniform("embed.med", {vocab.n_med, d}, el, rng);
  pe.pool_visit_ = SelfAttentionPool::init(reg, "pool.visit", d, rng);
  pe.pool_patient_ = SelfAttentionPool::init(reg, "pool.patient", d, rng);
  pe.pool_medrec_ = SelfAttentionPool::init(reg, "pool.medrec", d, rng);
  pe.pool_visit_.mean_fallback = opts.mean_pools;
  pe.pool_patient_.mean_fallback = opts.mean_pools;
  pe.pool_medrec_.mean_fallback = opts.mean_pools;
  if (opts.recurrent) {
    pe.rec_visit_ = RecurrentEncoder::init(reg, "enc.visit.rec",
                                           *opts.recurrent, d, rng);
    pe.rec_med_ =
        RecurrentEncoder::init(reg, "enc.med.rec", *opts.recurrent, d, rng);
  } else {
    pe.enc_visit_ = TransformerEncoder::init(reg, "enc.visit", cfg, rng);
    pe.enc_med_ = TransformerEncoder::init(reg, "enc.med", cfg, rng);
  }
  pe.no_history_ = reg.add_uniform("no_history", {d}, el, rng);
  return pe;
}

PatientEncoder::VisitEmbedding PatientEncoder::embed_visit(
    const Visit& v, bool include_meds) const {
  std::vector<Tensor> blocks;
  if (!v.diagnoses.empty()) blocks.push_back(rows(embed_diag_, v.diagnoses));
  if (!v.procedures.empty()) blocks.push_back(rows(embed_proc_, v.procedures));
  if (include_meds && !v.medications.empty())
    blocks.push_back(rows(embed_med_, v.medications));
  if (blocks.empty())
    throw ShapeError("visit has no codes to embed");
  Tensor e = blocks.size() == 1 ? blocks[0] : concat(blocks, 0);
  return {e, mean_rows(e)};
}

Tensor PatientEncoder::encode_sequence(const TransformerEncoder& enc,
                                       const RecurrentEncoder& rec,
                                       const Tensor& seq) const {
  return opts_.recurrent ? rec.encode(seq) : enc.encode(seq);
}

PatientState PatientEncoder::encode(const std::vector<Visit>& history) const {
  if (history.empty())
    throw ShapeError("patient history must contain at least one visit");
  std::size_t t_count = history.size();
  PatientState st;

  std::vector<Tensor> att_rows, ave_rows, med_rows;
  for (std::size_t t = 0; t < t_count; ++t) {
    bool is_current = t + 1 == t_count;
    VisitEmbedding ve = embed_visit(history[t], !is_current);
    auto pooled = pool_visit_.apply(ve.e);
    st.visit_pool_weights.push_back(pooled.weights);
    att_rows.push_back(pooled.pooled);
    ave_rows.push_back(ve.e_ave);
    if (!is_current && !history[t].medications.empty())
      med_rows.push_back(mean_rows(rows(embed_med_, history[t].medications)));
  }
  st.seq_e_att = stack_rows(att_rows);
  st.seq_e_ave = stack_rows(ave_rows);
  st.seq_e_tr = encode_sequence(enc_visit_, rec_visit_, st.seq_e_ave);

  std::vector<Tensor> rp_parts;
  if (!opts_.drop_seq_att) rp_parts.push_back(st.seq_e_att);
  if (!opts_.drop_seq_tr) rp_parts.push_back(st.seq_e_tr);
  if (rp_parts.empty())
    throw ConfigError("cannot drop both seq_e_att and seq_e_tr");
  Tensor rp_input = rp_parts.size() == 1 ? rp_parts[0] : concat(rp_parts, 0);
  auto rp = pool_patient_.apply(rp_input);
  st.r_p = rp.pooled;
  st.patient_pool_weights = rp.weights;

  if (med_rows.empty()) {
    st.r_m = no_history_;
  } else {
    st.seq_m = stack_rows(med_rows);
    st.seq_m_tr = encode_sequence(enc_med_, rec_med_, *st.seq_m);
    st.r_m = pool_medrec_.apply(*st.seq_m_tr).pooled;
  }
  return st;
}

}  // namespace acdnet
