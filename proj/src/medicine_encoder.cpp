#include "acdnet/medicine_encoder.hpp"

#include <cmath>

namespace acdnet {

namespace {
double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}
}  // namespace

Tensor normalize_adjacency(const Tensor& adj) {
  if (adj.rank() != 2 || adj.dim(0) != adj.dim(1))
    throw ShapeError("adjacency must be square, got " +
                     shape_str(adj.shape()));
  std::size_t n = adj.dim(0);
  const auto& a = adj.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (a[i * n + j] != a[j * n + i])
        throw ShapeError("adjacency is not symmetric at (" +
                         std::to_string(i) + "," + std::to_string(j) + ")");
  // degree of A + I; always >= 1
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) deg += a[i * n + j];
    dinv[i] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double aij = (i == j) ? 1.0 : a[i * n + j];
      if (aij != 0.0) out[i * n + j] = dinv[i] * aij * dinv[j];
    }
  return Tensor::from({n, n}, std::move(out));
}

Tensor normalize_adjacency(const std::vector<std::uint8_t>& adj,
                           std::size_t n) {
  std::vector<double> d(adj.begin(), adj.end());
  return normalize_adjacency(Tensor::from({n, n}, std::move(d)));
}

Tensor gcn_encode(const Tensor& a_norm, const Tensor& features,
                  const Tensor& w2) {
  return matmul(matmul(a_norm, relu(matmul(a_norm, features))), w2);
}

GatLayer GatLayer::init(ParamRegistry& reg, const std::string& prefix,
                        std::size_t dim, std::size_t heads,
                        std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("GAT heads must divide dim");
  GatLayer g;
  g.heads = heads;
  std::size_t dk = dim / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    g.w.push_back(reg.add_uniform(prefix + ".head" + std::to_string(h) + ".w",
                                  {dim, dk}, xavier_limit(dim, dk), rng));
    g.a_vec.push_back(
        reg.add_uniform(prefix + ".head" + std::to_string(h) + ".a", {2 * dk},
                        xavier_limit(2 * dk, 1), rng));
  }
  return g;
}

Tensor GatLayer::apply(const Tensor& h,
                       const std::vector<std::uint8_t>& mask) const {
  std::size_t n = h.dim(0);
  if (mask.size() != n * n) throw ShapeError("GAT mask size mismatch");
  std::size_t dk = w[0].dim(1);
  std::vector<Tensor> outs;
  for (std::size_t head = 0; head < heads; ++head) {
    Tensor wh = matmul(h, w[head]);  // n x dk
    Tensor a_row = reshape_to_row(a_vec[head]);
    Tensor a_src = flatten(transpose(slice_cols(a_row, 0, dk)));
    Tensor a_dst = flatten(transpose(slice_cols(a_row, dk, 2 * dk)));
    Tensor s_src = matmul(wh, a_src);  // [n]
    Tensor s_dst = matmul(wh, a_dst);
    Tensor scores = leaky_relu(outer_sum(s_src, s_dst), slope);
    Tensor attn = masked_row_softmax(scores, mask);
    outs.push_back(matmul(attn, wh));
  }
  return outs.size() == 1 ? outs[0] : concat(outs, 1);
}

Tensor readout_mean(const Tensor& h) { return mean_rows(h); }

MedicineEncoder MedicineEncoder::init(ParamRegistry& reg, std::size_t n_med,
                                      std::size_t dim, std::size_t heads,
                                      std::size_t atom_type_count,
                                      Options opts, std::mt19937_64& rng) {
  MedicineEncoder me;
  me.opts_ = opts;
  me.n_med_ = n_med;
  me.dim_ = dim;
  double wl = xavier_limit(dim, dim);
  if (opts.use_graphs) {
    me.ehr_w1_ = reg.add_uniform("medgraph.ehr.w1", {n_med, dim},
                                 xavier_limit(n_med, dim), rng);
    me.ehr_w2_ = reg.add_uniform("medgraph.ehr.w2", {dim, dim}, wl, rng);
    me.ddi_w1_ = reg.add_uniform("medgraph.ddi.w1", {n_med, dim},
                                 xavier_limit(n_med, dim), rng);
    me.ddi_w2_ = reg.add_uniform("medgraph.ddi.w2", {dim, dim}, wl, rng);
  }
  if (opts.use_mol) {
    me.atom_embed_ = reg.add_uniform("medgraph.atom_embed",
                                     {atom_type_count, dim},
                                     xavier_limit(1, dim), rng);
    me.mol_w1_ = reg.add_uniform("medgraph.mol.w1", {dim, dim}, wl, rng);
    me.mol_w2_ = reg.add_uniform("medgraph.mol.w2", {dim, dim}, wl, rng);
    me.gat_ = GatLayer::init(reg, "medgraph.gat", dim, heads, rng);
  }
  me.fuse_w_ = reg.add_uniform("medgraph.fuse.w", {4 * dim, dim},
                               xavier_limit(4 * dim, dim), rng);
  me.fuse_b_ = reg.add_const("medgraph.fuse.b", {dim}, 0.0);
  return me;
}

void MedicineEncoder::set_graphs(const KnowledgeGraphs& graphs) {
  if (graphs.n_med != n_med_)
    throw ConfigError("graph medicine count " + std::to_string(graphs.n_med) +
                      " does not match model " + std::to_string(n_med_));
  ehr_norm_ = normalize_adjacency(graphs.ehr_adj, n_med_);
  ddi_norm_ = normalize_adjacency(graphs.ddi_adj, n_med_);
  mol_norm_.clear();
  mol_mask_.clear();
  mol_types_.clear();
  std::size_t n_types = opts_.use_mol ? atom_embed_.dim(0) : 0;
  for (const auto& mol : graphs.molecules) {
    std::size_t n = mol.atoms();
    auto adj = mol.adjacency();
    mol_norm_.push_back(normalize_adjacency(adj, n));
    // neighborhood mask includes the self edge
    auto mask = adj;
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 1;
    mol_mask_.push_back(std::move(mask));
    std::vector<std::size_t> types;
    for (int t : mol.atom_types) {
      if (opts_.use_mol && (t < 0 || static_cast<std::size_t>(t) >= n_types))
        throw ConfigError("atom type " + std::to_string(t) +
                          " outside embedding table of size " +
                          std::to_string(n_types));
      types.push_back(static_cast<std::size_t>(t));
    }
    mol_types_.push_back(std::move(types));
  }
}

Tensor MedicineEncoder::encode_molecule(std::size_t index) const {
  const Tensor& a_norm = mol_norm_.at(index);
  Tensor h0 = matmul(rows(atom_embed_, mol_types_[index]), mol_w1_);
  Tensor gcn = gcn_encode(a_norm, h0, mol_w2_);
  Tensor gat = gat_.apply(gcn, mol_mask_[index]);
  return readout_mean(gat);
}

MedicineMatrix MedicineEncoder::build(const Tensor& med_table) const {
  if (!has_graphs())
    throw ConfigError("medicine encoder has no graphs; call set_graphs first");
  MedicineMatrix m;
  m.base = med_table;
  if (opts_.use_graphs) {
    m.e = gcn_encode(ehr_norm_, ehr_w1_, ehr_w2_);
    m.d = gcn_encode(ddi_norm_, ddi_w1_, ddi_w2_);
  } else {
    m.e = Tensor::zeros({n_med_, dim_});
    m.d = Tensor::zeros({n_med_, dim_});
  }
  if (opts_.use_mol) {
    std::vector<Tensor> rows_out;
    rows_out.reserve(n_med_);
    for (std::size_t i = 0; i < n_med_; ++i)
      rows_out.push_back(encode_molecule(i));
    m.mol = stack_rows(rows_out);
  } else {
    m.mol = Tensor::zeros({n_med_, dim_});
  }
  Tensor cat = concat({m.base, m.e, m.d, m.mol}, 1);
  m.fused = relu(add(matmul(cat, fuse_w_), fuse_b_));
  return m;
}

}  // namespace acdnet
