#include <random>

#include "acdnet/medicine_encoder.hpp"
#include "doctest.h"

using namespace acdnet;

TEST_CASE("adjacency normalization on a single edge") {
  // two nodes, one edge: A + I is all ones, both degrees 2, so every
  // entry becomes 1/2
  std::vector<std::uint8_t> adj = {0, 1, 1, 0};
  Tensor n = normalize_adjacency(adj, 2);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(n.data()[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("an empty graph normalizes to the identity") {
  std::vector<std::uint8_t> adj(9, 0);
  Tensor n = normalize_adjacency(adj, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(n(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("asymmetric adjacency is rejected") {
  Tensor bad = Tensor::from({2, 2}, {0, 1, 0, 0});
  CHECK_THROWS_AS(normalize_adjacency(bad), ShapeError);
}

TEST_CASE("graph convolution with the identity reduces to a dense layer") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor f = Tensor::from({2, 3}, {1, -2, 3, -4, 5, -6});
  Tensor w2 = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor out = gcn_encode(eye, f, w2);
  // relu kills the negatives, the identity weights keep the rest
  CHECK(out(0, 0) == 1);
  CHECK(out(0, 1) == 0);
  CHECK(out(1, 1) == 5);
}

TEST_CASE("graph attention rows attend only within the neighborhood") {
  ParamRegistry reg;
  std::mt19937_64 rng(3);
  auto gat = GatLayer::init(reg, "gat", 8, 2, rng);
  Tensor h = Tensor::zeros({4, 8});
  for (std::size_t i = 0; i < h.size(); ++i)
    h.data()[i] = 0.1 * static_cast<double>((i * 7) % 11) - 0.3;
  // path graph 0-1-2-3 with self loops
  std::vector<std::uint8_t> mask = {1, 1, 0, 0, 1, 1, 1, 0,
                                    0, 1, 1, 1, 0, 0, 1, 1};
  Tensor out = gat.apply(h, mask);
  CHECK(out.shape() == Shape{4, 8});

  // separating node 3 changes its row but not node 0's
  std::vector<std::uint8_t> cut = mask;
  cut[2 * 4 + 3] = 0;
  cut[3 * 4 + 2] = 0;
  Tensor out2 = gat.apply(h, cut);
  double diff0 = 0, diff3 = 0;
  for (std::size_t j = 0; j < 8; ++j) {
    diff0 += std::fabs(out(0, j) - out2(0, j));
    diff3 += std::fabs(out(3, j) - out2(3, j));
  }
  CHECK(diff0 == doctest::Approx(0.0));
  CHECK(diff3 > 1e-9);
}

TEST_CASE("mean readout ignores node order") {
  Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor p = Tensor::from({3, 2}, {5, 6, 1, 2, 3, 4});
  Tensor a = readout_mean(h);
  Tensor b = readout_mean(p);
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(a(j) == doctest::Approx(b(j)));
  CHECK(a(0) == doctest::Approx(3.0));
}

namespace {
KnowledgeGraphs toy_graphs() {
  KnowledgeGraphs g;
  g.n_med = 3;
  g.ehr_adj = {0, 1, 0, 1, 0, 1, 0, 1, 0};
  g.ddi_adj = {0, 0, 1, 0, 0, 0, 1, 0, 0};
  for (std::size_t i = 0; i < 3; ++i) {
    Molecule m;
    m.atom_types = {0, 1, 1 + static_cast<int>(i % 2)};
    m.edges = {{0, 1}, {1, 2}};
    g.molecules.push_back(m);
  }
  return g;
}
}  // namespace

TEST_CASE("the fused medicine matrix has one row per medicine") {
  ParamRegistry reg;
  std::mt19937_64 rng(4);
  MedicineEncoder enc =
      MedicineEncoder::init(reg, 3, 8, 2, 4, MedicineEncoder::Options{}, rng);
  enc.set_graphs(toy_graphs());
  Tensor table = reg.add_uniform("table", {3, 8}, 0.5, rng);
  MedicineMatrix m = enc.build(table);
  CHECK(m.fused.shape() == Shape{3, 8});
  CHECK(m.e.shape() == Shape{3, 8});
  CHECK(m.mol.shape() == Shape{3, 8});
  for (double v : m.fused.data()) CHECK(v >= 0.0);  // relu output
}

TEST_CASE("disabling the co-occurrence graphs zeroes their blocks") {
  ParamRegistry reg;
  std::mt19937_64 rng(4);
  MedicineEncoder::Options opts;
  opts.use_graphs = false;
  MedicineEncoder enc = MedicineEncoder::init(reg, 3, 8, 2, 4, opts, rng);
  enc.set_graphs(toy_graphs());
  CHECK_FALSE(reg.contains("medgraph.ehr.w1"));
  Tensor table = reg.add_uniform("table", {3, 8}, 0.5, rng);
  MedicineMatrix m = enc.build(table);
  for (double v : m.e.data()) CHECK(v == 0.0);
  for (double v : m.d.data()) CHECK(v == 0.0);
  double mol_mass = 0;
  for (double v : m.mol.data()) mol_mass += std::fabs(v);
  CHECK(mol_mass > 0.0);  // the molecular branch is still live
}

TEST_CASE("molecule readout reacts to the molecular graph") {
  ParamRegistry reg;
  std::mt19937_64 rng(5);
  MedicineEncoder enc =
      MedicineEncoder::init(reg, 3, 8, 2, 4, MedicineEncoder::Options{}, rng);
  KnowledgeGraphs g = toy_graphs();
  enc.set_graphs(g);
  Tensor a = enc.encode_molecule(0);

  g.molecules[0].edges = {{0, 1}, {0, 2}};  // rewire
  enc.set_graphs(g);
  Tensor b = enc.encode_molecule(0);
  double diff = 0;
  for (std::size_t j = 0; j < 8; ++j) diff += std::fabs(a(j) - b(j));
  CHECK(diff > 1e-9);
}
