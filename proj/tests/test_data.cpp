#include <cstdio>
#include <set>

#include "acdnet/data.hpp"
#include "acdnet/presets.hpp"
#include "doctest.h"

using namespace acdnet;

namespace {
bool same_patients(const std::vector<PatientRecord>& a,
                   const std::vector<PatientRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].visits.size() != b[i].visits.size())
      return false;
    for (std::size_t t = 0; t < a[i].visits.size(); ++t) {
      if (a[i].visits[t].diagnoses != b[i].visits[t].diagnoses ||
          a[i].visits[t].procedures != b[i].visits[t].procedures ||
          a[i].visits[t].medications != b[i].visits[t].medications)
        return false;
    }
  }
  return true;
}
}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  GenConfig g = presets::overfit_corpus();
  Dataset a = generate_synthetic(g, 11);
  Dataset b = generate_synthetic(g, 11);
  Dataset c = generate_synthetic(g, 12);
  CHECK(same_patients(a.patients, b.patients));
  CHECK(a.graphs.ddi_adj == b.graphs.ddi_adj);
  CHECK_FALSE(same_patients(a.patients, c.patients));
}

TEST_CASE("generated corpus matches its configuration") {
  GenConfig g;  // stock corpus
  Dataset ds = generate_synthetic(g, 3);
  validate_dataset(ds);
  DatasetSummary s = summarize(ds);
  CHECK(s.patients == g.n_patients);
  CHECK(s.medicines == g.n_medicines);
  CHECK(s.ddi_pairs == g.ddi_pairs);
  CHECK(ds.graphs.ddi_pair_count() == g.ddi_pairs);
  // sampled means land near the configured ones
  CHECK(s.avg_visits == doctest::Approx(g.mean_visits).epsilon(0.15));
  CHECK(s.avg_diag == doctest::Approx(g.mean_diagnoses).epsilon(0.15));
  CHECK(s.avg_med == doctest::Approx(g.mean_medications).epsilon(0.15));
  CHECK(s.max_visits <= g.max_visits);

  REQUIRE(ds.graphs.molecules.size() == g.n_medicines);
  for (const auto& mol : ds.graphs.molecules) {
    CHECK(mol.atoms() >= g.atom_min);
    CHECK(mol.atoms() <= g.atom_max);
    // a spanning tree plus extras is always connected
    std::vector<std::set<std::size_t>> adj(mol.atoms());
    for (auto [u, v] : mol.edges) {
      adj[u].insert(v);
      adj[v].insert(u);
    }
    std::set<std::size_t> seen = {0};
    std::vector<std::size_t> stack = {0};
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      for (auto v : adj[u])
        if (seen.insert(v).second) stack.push_back(v);
    }
    CHECK(seen.size() == mol.atoms());
  }
}

TEST_CASE("split follows the 4:1:1 ratio") {
  GenConfig g = presets::overfit_corpus();
  g.n_patients = 7;
  Dataset ds = generate_synthetic(g, 5);
  Split s = split_dataset(ds.patients, 1);
  CHECK(s.train.size() == 5);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);

  g.n_patients = 600;
  Dataset big = generate_synthetic(g, 5);
  Split sb = split_dataset(big.patients, 1);
  CHECK(sb.train.size() == 400);
  CHECK(sb.val.size() == 100);
  CHECK(sb.test.size() == 100);

  // disjoint and exhaustive
  std::set<std::string> ids;
  for (const auto& p : sb.train) ids.insert(p.id);
  for (const auto& p : sb.val) ids.insert(p.id);
  for (const auto& p : sb.test) ids.insert(p.id);
  CHECK(ids.size() == 600);

  // the shuffle is seed-driven
  Split sb2 = split_dataset(big.patients, 1);
  CHECK(same_patients(sb.test, sb2.test));
  Split sb3 = split_dataset(big.patients, 2);
  CHECK_FALSE(same_patients(sb.test, sb3.test));
}

TEST_CASE("dataset files round-trip") {
  GenConfig g = presets::overfit_corpus();
  g.n_patients = 12;
  Dataset ds = generate_synthetic(g, 9);
  std::string path = "roundtrip_corpus.jsonl";
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  std::remove(path.c_str());

  CHECK(back.vocab.n_diag == ds.vocab.n_diag);
  CHECK(back.vocab.n_med == ds.vocab.n_med);
  CHECK(same_patients(back.patients, ds.patients));
  CHECK(back.graphs.ehr_adj == ds.graphs.ehr_adj);
  CHECK(back.graphs.ddi_adj == ds.graphs.ddi_adj);
  REQUIRE(back.graphs.molecules.size() == ds.graphs.molecules.size());
  for (std::size_t i = 0; i < back.graphs.molecules.size(); ++i) {
    CHECK(back.graphs.molecules[i].atom_types ==
          ds.graphs.molecules[i].atom_types);
    CHECK(back.graphs.molecules[i].edges == ds.graphs.molecules[i].edges);
  }
}

TEST_CASE("validation rejects out-of-range codes") {
  GenConfig g = presets::overfit_corpus();
  g.n_patients = 5;
  Dataset ds = generate_synthetic(g, 2);
  validate_dataset(ds);
  ds.patients[0].visits[0].medications.push_back(ds.vocab.n_med);
  CHECK_THROWS_AS(validate_dataset(ds), ParseError);
}

TEST_CASE("loading garbage reports the offending line") {
  std::string path = "garbage_corpus.jsonl";
  std::FILE* f = std::fopen(path.c_str(), "w");
  std::fputs("{\"type\":\"header\"", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_dataset(path), ParseError);
  std::remove(path.c_str());
}
