// Medicine-side encoding: GCN over the EHR and DDI graphs, GCN + GAT +
// mean readout over per-medicine molecular graphs, and the fused medicine
// matrix M.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "acdnet/data.hpp"
#include "acdnet/optim.hpp"
#include "acdnet/tensor.hpp"

namespace acdnet {

// D^{-1/2} (A + I) D^{-1/2} for a symmetric 0/1 adjacency with zero
// diagonal; throws on asymmetric input.
Tensor normalize_adjacency(const Tensor& adj);
Tensor normalize_adjacency(const std::vector<std::uint8_t>& adj, std::size_t n);

// A_norm * relu(A_norm * features) * w2, the two-hop graph convolution.
Tensor gcn_encode(const Tensor& a_norm, const Tensor& features,
                  const Tensor& w2);

// Multi-head graph attention over a molecular graph; neighborhoods are
// N(u) + {u}. Head outputs are concatenated back to width dim.
struct GatLayer {
  std::size_t heads = 0;
  double slope = 0.2;
  std::vector<Tensor> w;      // per head: dim x (dim/heads)
  std::vector<Tensor> a_vec;  // per head: 2 * (dim/heads)

  static GatLayer init(ParamRegistry& reg, const std::string& prefix,
                       std::size_t dim, std::size_t heads,
                       std::mt19937_64& rng);
  // mask: n x n self-loop-augmented adjacency.
  Tensor apply(const Tensor& h, const std::vector<std::uint8_t>& mask) const;
};

Tensor readout_mean(const Tensor& h);  // n x dim -> dim

struct MedicineMatrix {
  Tensor base;   // |Cm| x dim (the shared medication embedding table)
  Tensor e;      // EHR-graph representation
  Tensor d;      // DDI-graph representation
  Tensor mol;    // stacked molecular readouts
  Tensor fused;  // M
};

class MedicineEncoder {
 public:
  struct Options {
    bool use_graphs = true;  // w/o M_e, M_d ablation when false
    bool use_mol = true;     // w/o M_mol ablation when false
  };

  MedicineEncoder() = default;
  static MedicineEncoder init(ParamRegistry& reg, std::size_t n_med,
                              std::size_t dim, std::size_t heads,
                              std::size_t atom_type_count, Options opts,
                              std::mt19937_64& rng);

  // Precomputes normalized adjacencies and neighborhood masks; graphs are
  // constants across training.
  void set_graphs(const KnowledgeGraphs& graphs);
  bool has_graphs() const { return ehr_norm_.defined(); }

  // Rebuilt whenever parameters change; med_table is the shared E_m.
  MedicineMatrix build(const Tensor& med_table) const;

  Tensor encode_molecule(std::size_t index) const;  // M^{m_i}, [dim]

 private:
  Options opts_;
  std::size_t n_med_ = 0, dim_ = 0;
  Tensor ehr_w1_, ehr_w2_;  // |Cm| x dim, dim x dim
  Tensor ddi_w1_, ddi_w2_;
  Tensor atom_embed_;             // atom_types x dim
  Tensor mol_w1_, mol_w2_;        // dim x dim (shared across molecules)
  GatLayer gat_;
  Tensor fuse_w_, fuse_b_;        // 4*dim x dim, dim

  Tensor ehr_norm_, ddi_norm_;    // constants
  std::vector<Tensor> mol_norm_;
  std::vector<std::vector<std::uint8_t>> mol_mask_;  // adjacency + I
  std::vector<std::vector<std::size_t>> mol_types_;
};

}  // namespace acdnet
