#include "acdnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace acdnet {

using nlohmann::json;

std::vector<std::uint8_t> Molecule::adjacency() const {
  std::size_t n = atoms();
  std::vector<std::uint8_t> adj(n * n, 0);
  for (auto [u, v] : edges) {
    adj[u * n + v] = 1;
    adj[v * n + u] = 1;
  }
  return adj;
}

namespace {
std::size_t upper_pairs(const std::vector<std::uint8_t>& adj, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) c += adj[i * n + j] != 0;
  return c;
}
}  // namespace

std::size_t KnowledgeGraphs::ddi_pair_count() const {
  return upper_pairs(ddi_adj, n_med);
}
std::size_t KnowledgeGraphs::ehr_pair_count() const {
  return upper_pairs(ehr_adj, n_med);
}

DatasetSummary summarize(const Dataset& ds) {
  DatasetSummary s;
  s.patients = ds.patients.size();
  s.diagnoses = ds.vocab.n_diag;
  s.procedures = ds.vocab.n_proc;
  s.medicines = ds.vocab.n_med;
  s.ddi_pairs = ds.graphs.ddi_pair_count();
  std::size_t td = 0, tp = 0, tm = 0;
  for (const auto& pat : ds.patients) {
    s.clinical_events += pat.visits.size();
    s.max_visits = std::max(s.max_visits, pat.visits.size());
    for (const auto& v : pat.visits) {
      td += v.diagnoses.size();
      tp += v.procedures.size();
      tm += v.medications.size();
      s.max_diag = std::max(s.max_diag, v.diagnoses.size());
      s.max_proc = std::max(s.max_proc, v.procedures.size());
      s.max_med = std::max(s.max_med, v.medications.size());
    }
  }
  if (s.patients > 0)
    s.avg_visits = static_cast<double>(s.clinical_events) / s.patients;
  if (s.clinical_events > 0) {
    s.avg_diag = static_cast<double>(td) / s.clinical_events;
    s.avg_proc = static_cast<double>(tp) / s.clinical_events;
    s.avg_med = static_cast<double>(tm) / s.clinical_events;
  }
  return s;
}

std::string DatasetSummary::to_text() const {
  std::ostringstream os;
  os << "# patients\t" << patients << "\n"
     << "# clinical events\t" << clinical_events << "\n"
     << "# diagnoses\t" << diagnoses << "\n"
     << "# procedures\t" << procedures << "\n"
     << "# medicines\t" << medicines << "\n"
     << "avg/max # of visits\t" << avg_visits << "/" << max_visits << "\n"
     << "avg/max # of diagnoses\t" << avg_diag << "/" << max_diag << "\n"
     << "avg/max # of procedures\t" << avg_proc << "/" << max_proc << "\n"
     << "avg/max # of medicines\t" << avg_med << "/" << max_med << "\n"
     << "total # of DDI pairs\t" << ddi_pairs << "\n";
  return os.str();
}

// --- synthetic generation ------------------------------------------------

namespace {

std::size_t poisson_at_least_one(double mean, std::mt19937_64& rng) {
  if (mean <= 1.0) return 1;
  std::poisson_distribution<std::size_t> dist(mean - 1.0);
  return 1 + dist(rng);
}

// Distinct codes: each draw comes from the profile pool with probability
// purity, otherwise uniformly from the vocabulary.
std::vector<std::size_t> draw_codes(std::size_t count, double purity,
                                    const std::vector<std::size_t>& pool,
                                    std::size_t vocab_size,
                                    std::mt19937_64& rng) {
  count = std::min(count, vocab_size);
  if (purity >= 1.0 && !pool.empty())
    count = std::min(count, pool.size());  // only the pool is reachable
  std::set<std::size_t> out;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any(0, vocab_size - 1);
  std::uniform_int_distribution<std::size_t> from_pool(0, pool.size() - 1);
  while (out.size() < count) {
    if (!pool.empty() && coin(rng) < purity)
      out.insert(pool[from_pool(rng)]);
    else
      out.insert(any(rng));
  }
  return {out.begin(), out.end()};
}

std::vector<std::size_t> sample_pool(std::size_t vocab_size,
                                     std::size_t pool_size,
                                     std::mt19937_64& rng) {
  std::vector<std::size_t> all(vocab_size);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  pool_size = std::min(pool_size, vocab_size);
  all.resize(pool_size);
  return all;
}

}  // namespace

Dataset generate_synthetic(const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.n_diagnoses < 1 || cfg.n_procedures < 1 || cfg.n_medicines < 1 ||
      cfg.n_patients < 1 || cfg.n_profiles < 1)
    throw ConfigError("generator sizes must be >= 1");
  std::size_t max_pairs = cfg.n_medicines * (cfg.n_medicines - 1) / 2;
  if (cfg.ddi_pairs > max_pairs)
    throw ConfigError("requested " + std::to_string(cfg.ddi_pairs) +
                      " DDI pairs but only " + std::to_string(max_pairs) +
                      " unordered pairs exist for " +
                      std::to_string(cfg.n_medicines) + " medicines");
  if (cfg.atom_min < 1 || cfg.atom_min > cfg.atom_max)
    throw ConfigError("invalid molecule atom-count range");

  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.gen = cfg;
  ds.vocab = {cfg.n_diagnoses, cfg.n_procedures, cfg.n_medicines};

  // Latent disease profiles with their own code pools.
  struct Profile {
    std::vector<std::size_t> diag, proc, med;
  };
  auto pool_size = [](double mean, std::size_t vocab) {
    return std::min(vocab, static_cast<std::size_t>(std::ceil(1.5 * mean)));
  };
  std::vector<Profile> profiles(cfg.n_profiles);
  for (auto& p : profiles) {
    p.diag = sample_pool(cfg.n_diagnoses,
                         pool_size(cfg.mean_diagnoses, cfg.n_diagnoses), rng);
    p.proc = sample_pool(cfg.n_procedures,
                         pool_size(cfg.mean_procedures, cfg.n_procedures), rng);
    p.med = sample_pool(cfg.n_medicines,
                        pool_size(cfg.mean_medications, cfg.n_medicines), rng);
  }

  std::uniform_int_distribution<std::size_t> pick_profile(0,
                                                          cfg.n_profiles - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  ds.patients.reserve(cfg.n_patients);
  for (std::size_t n = 0; n < cfg.n_patients; ++n) {
    PatientRecord rec;
    rec.id = "p" + std::to_string(n);
    std::size_t t_count =
        std::min(cfg.max_visits, poisson_at_least_one(cfg.mean_visits, rng));
    std::size_t prof = pick_profile(rng);
    for (std::size_t t = 0; t < t_count; ++t) {
      if (t > 0 && coin(rng) >= cfg.profile_persistence)
        prof = pick_profile(rng);
      const Profile& p = profiles[prof];
      Visit v;
      if (cfg.full_pool_codes) {
        // noise-free corpus: every visit carries its profile's exact pools
        v.diagnoses = p.diag;
        v.procedures = p.proc;
        v.medications = p.med;
        std::sort(v.diagnoses.begin(), v.diagnoses.end());
        std::sort(v.procedures.begin(), v.procedures.end());
        std::sort(v.medications.begin(), v.medications.end());
      } else {
        v.diagnoses = draw_codes(poisson_at_least_one(cfg.mean_diagnoses, rng),
                                 cfg.profile_purity, p.diag, cfg.n_diagnoses,
                                 rng);
        v.procedures =
            draw_codes(poisson_at_least_one(cfg.mean_procedures, rng),
                       cfg.profile_purity, p.proc, cfg.n_procedures, rng);
        v.medications =
            draw_codes(poisson_at_least_one(cfg.mean_medications, rng),
                       cfg.profile_purity, p.med, cfg.n_medicines, rng);
      }
      rec.visits.push_back(std::move(v));
    }
    ds.patients.push_back(std::move(rec));
  }

  // EHR co-prescription graph: every medication pair seen in one visit.
  std::size_t nm = cfg.n_medicines;
  ds.graphs.n_med = nm;
  ds.graphs.ehr_adj.assign(nm * nm, 0);
  for (const auto& pat : ds.patients)
    for (const auto& v : pat.visits)
      for (std::size_t a = 0; a < v.medications.size(); ++a)
        for (std::size_t b = a + 1; b < v.medications.size(); ++b) {
          std::size_t i = v.medications[a], j = v.medications[b];
          ds.graphs.ehr_adj[i * nm + j] = 1;
          ds.graphs.ehr_adj[j * nm + i] = 1;
        }

  // DDI graph: exact pair count, with a configured fraction drawn from
  // EHR co-pairs and the rest from non-EHR pairs.
  std::vector<std::pair<std::size_t, std::size_t>> ehr_pairs, other_pairs;
  for (std::size_t i = 0; i < nm; ++i)
    for (std::size_t j = i + 1; j < nm; ++j)
      (ds.graphs.ehr_adj[i * nm + j] ? ehr_pairs : other_pairs)
          .emplace_back(i, j);
  std::shuffle(ehr_pairs.begin(), ehr_pairs.end(), rng);
  std::shuffle(other_pairs.begin(), other_pairs.end(), rng);
  std::size_t want_overlap = std::min(
      ehr_pairs.size(),
      static_cast<std::size_t>(std::llround(cfg.ddi_ehr_overlap *
                                            static_cast<double>(cfg.ddi_pairs))));
  ds.graphs.ddi_adj.assign(nm * nm, 0);
  std::size_t placed = 0;
  auto place = [&](const std::pair<std::size_t, std::size_t>& pr) {
    ds.graphs.ddi_adj[pr.first * nm + pr.second] = 1;
    ds.graphs.ddi_adj[pr.second * nm + pr.first] = 1;
    ++placed;
  };
  for (std::size_t k = 0; k < want_overlap && placed < cfg.ddi_pairs; ++k)
    place(ehr_pairs[k]);
  for (std::size_t k = 0; k < other_pairs.size() && placed < cfg.ddi_pairs; ++k)
    place(other_pairs[k]);
  for (std::size_t k = want_overlap;
       k < ehr_pairs.size() && placed < cfg.ddi_pairs; ++k)
    place(ehr_pairs[k]);

  // Molecules: connected random graphs (random spanning tree + extra edges).
  std::uniform_int_distribution<std::size_t> atoms(cfg.atom_min, cfg.atom_max);
  std::uniform_int_distribution<int> atype(
      0, static_cast<int>(cfg.atom_type_count) - 1);
  ds.graphs.molecules.resize(nm);
  for (auto& mol : ds.graphs.molecules) {
    std::size_t n = atoms(rng);
    mol.atom_types.resize(n);
    for (auto& t : mol.atom_types) t = atype(rng);
    for (std::size_t u = 1; u < n; ++u) {
      std::uniform_int_distribution<std::size_t> parent(0, u - 1);
      std::size_t v = parent(rng);
      mol.edges.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::set<std::pair<std::size_t, std::size_t>> have(mol.edges.begin(),
                                                       mol.edges.end());
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (!have.count({u, v}) && coin(rng) < cfg.mol_edge_prob)
          mol.edges.emplace_back(u, v);
    std::sort(mol.edges.begin(), mol.edges.end());
  }

  return ds;
}

Split split_dataset(const std::vector<PatientRecord>& patients,
                    std::uint64_t seed, std::size_t r_train, std::size_t r_val,
                    std::size_t r_test) {
  std::size_t total_r = r_train + r_val + r_test;
  if (patients.size() < total_r)
    throw ConfigError("need at least " + std::to_string(total_r) +
                      " patients to split, have " +
                      std::to_string(patients.size()));
  std::vector<std::size_t> idx(patients.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::size_t n = patients.size();
  std::size_t counts[3] = {n * r_train / total_r, n * r_val / total_r,
                           n * r_test / total_r};
  std::size_t rem = n - counts[0] - counts[1] - counts[2];
  for (std::size_t k = 0; rem > 0; k = (k + 1) % 3, --rem) ++counts[k];

  Split s;
  std::size_t at = 0;
  for (std::size_t i = 0; i < counts[0]; ++i) s.train.push_back(patients[idx[at++]]);
  for (std::size_t i = 0; i < counts[1]; ++i) s.val.push_back(patients[idx[at++]]);
  for (std::size_t i = 0; i < counts[2]; ++i) s.test.push_back(patients[idx[at++]]);
  return s;
}

// --- dataset container (line-delimited JSON) -----------------------------

namespace {

json gen_to_json(const GenConfig& g) {
  return json{{"n_diagnoses", g.n_diagnoses},
              {"n_procedures", g.n_procedures},
              {"n_medicines", g.n_medicines},
              {"n_patients", g.n_patients},
              {"n_profiles", g.n_profiles},
              {"mean_visits", g.mean_visits},
              {"max_visits", g.max_visits},
              {"mean_diagnoses", g.mean_diagnoses},
              {"mean_procedures", g.mean_procedures},
              {"mean_medications", g.mean_medications},
              {"profile_purity", g.profile_purity},
              {"profile_persistence", g.profile_persistence},
              {"full_pool_codes", g.full_pool_codes},
              {"ddi_pairs", g.ddi_pairs},
              {"ddi_ehr_overlap", g.ddi_ehr_overlap},
              {"atom_min", g.atom_min},
              {"atom_max", g.atom_max},
              {"atom_type_count", g.atom_type_count},
              {"mol_edge_prob", g.mol_edge_prob}};
}

GenConfig gen_from_json(const json& j) {
  GenConfig g;
  g.n_diagnoses = j.value("n_diagnoses", g.n_diagnoses);
  g.n_procedures = j.value("n_procedures", g.n_procedures);
  g.n_medicines = j.value("n_medicines", g.n_medicines);
  g.n_patients = j.value("n_patients", g.n_patients);
  g.n_profiles = j.value("n_profiles", g.n_profiles);
  g.mean_visits = j.value("mean_visits", g.mean_visits);
  g.max_visits = j.value("max_visits", g.max_visits);
  g.mean_diagnoses = j.value("mean_diagnoses", g.mean_diagnoses);
  g.mean_procedures = j.value("mean_procedures", g.mean_procedures);
  g.mean_medications = j.value("mean_medications", g.mean_medications);
  g.profile_purity = j.value("profile_purity", g.profile_purity);
  g.profile_persistence = j.value("profile_persistence", g.profile_persistence);
  g.full_pool_codes = j.value("full_pool_codes", g.full_pool_codes);
  g.ddi_pairs = j.value("ddi_pairs", g.ddi_pairs);
  g.ddi_ehr_overlap = j.value("ddi_ehr_overlap", g.ddi_ehr_overlap);
  g.atom_min = j.value("atom_min", g.atom_min);
  g.atom_max = j.value("atom_max", g.atom_max);
  g.atom_type_count = j.value("atom_type_count", g.atom_type_count);
  g.mol_edge_prob = j.value("mol_edge_prob", g.mol_edge_prob);
  return g;
}

json edges_to_json(const std::vector<std::uint8_t>& adj, std::size_t n) {
  json edges = json::array();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (adj[i * n + j]) edges.push_back(json::array({i, j}));
  return edges;
}

void edges_from_json(const json& edges, std::vector<std::uint8_t>& adj,
                     std::size_t n, const std::string& what) {
  adj.assign(n * n, 0);
  for (const auto& e : edges) {
    std::size_t i = e.at(0), j = e.at(1);
    if (i >= n || j >= n)
      throw ParseError(what + " edge (" + std::to_string(i) + "," +
                       std::to_string(j) + ") out of bounds for " +
                       std::to_string(n) + " nodes");
    if (i == j) throw ParseError(what + " self-loop at node " + std::to_string(i));
    adj[i * n + j] = 1;
    adj[j * n + i] = 1;
  }
}

}  // namespace

void validate_dataset(const Dataset& ds) {
  const auto& v = ds.vocab;
  if (v.n_diag < 1 || v.n_proc < 1 || v.n_med < 1)
    throw ParseError("vocabulary sizes must be >= 1");
  auto check_codes = [](const std::vector<std::size_t>& codes, std::size_t n,
                        const std::string& what, const std::string& pid) {
    for (auto c : codes)
      if (c >= n)
        throw ParseError("patient " + pid + ": " + what + " index " +
                         std::to_string(c) + " >= vocabulary size " +
                         std::to_string(n));
  };
  for (const auto& pat : ds.patients) {
    if (pat.visits.empty())
      throw ParseError("patient " + pat.id + " has no visits");
    for (const auto& vis : pat.visits) {
      check_codes(vis.diagnoses, v.n_diag, "diagnosis", pat.id);
      check_codes(vis.procedures, v.n_proc, "procedure", pat.id);
      check_codes(vis.medications, v.n_med, "medication", pat.id);
    }
  }
  if (ds.graphs.n_med != v.n_med)
    throw ParseError("graph medicine count does not match vocabulary");
  if (ds.graphs.molecules.size() != v.n_med)
    throw ParseError("expected one molecule per medicine");
  for (std::size_t m = 0; m < ds.graphs.molecules.size(); ++m) {
    const auto& mol = ds.graphs.molecules[m];
    if (mol.atoms() < 1)
      throw ParseError("molecule " + std::to_string(m) + " has no atoms");
    for (auto [a, b] : mol.edges)
      if (a >= mol.atoms() || b >= mol.atoms() || a == b)
        throw ParseError("molecule " + std::to_string(m) + " has invalid edge");
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  json header{{"type", "header"},
              {"format_version", 1},
              {"vocab",
               {{"diagnoses", ds.vocab.n_diag},
                {"procedures", ds.vocab.n_proc},
                {"medications", ds.vocab.n_med}}},
              {"gen_config", gen_to_json(ds.gen)}};
  os << header.dump() << "\n";
  for (const auto& pat : ds.patients) {
    json visits = json::array();
    for (const auto& v : pat.visits)
      visits.push_back(json{{"d", v.diagnoses},
                            {"p", v.procedures},
                            {"m", v.medications}});
    os << json{{"type", "patient"}, {"id", pat.id}, {"visits", visits}}.dump()
       << "\n";
  }
  os << json{{"type", "ehr_graph"},
             {"edges", edges_to_json(ds.graphs.ehr_adj, ds.graphs.n_med)}}
            .dump()
     << "\n";
  os << json{{"type", "ddi_graph"},
             {"edges", edges_to_json(ds.graphs.ddi_adj, ds.graphs.n_med)}}
            .dump()
     << "\n";
  json mols = json::array();
  for (const auto& mol : ds.graphs.molecules) {
    json edges = json::array();
    for (auto [a, b] : mol.edges) edges.push_back(json::array({a, b}));
    mols.push_back(json{{"types", mol.atom_types}, {"edges", edges}});
  }
  os << json{{"type", "molecules"}, {"molecules", mols}}.dump() << "\n";
  if (!os) throw ParseError("write failure on " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path);
  Dataset ds;
  bool have_header = false, have_ehr = false, have_ddi = false,
       have_mols = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      std::string type = j.at("type");
      if (type == "header") {
        const auto& v = j.at("vocab");
        ds.vocab.n_diag = v.at("diagnoses");
        ds.vocab.n_proc = v.at("procedures");
        ds.vocab.n_med = v.at("medications");
        if (j.contains("gen_config")) ds.gen = gen_from_json(j["gen_config"]);
        ds.graphs.n_med = ds.vocab.n_med;
        have_header = true;
      } else if (type == "patient") {
        if (!have_header)
          throw ParseError("patient record before header");
        PatientRecord rec;
        rec.id = j.at("id");
        for (const auto& vj : j.at("visits")) {
          Visit v;
          v.diagnoses = vj.at("d").get<std::vector<std::size_t>>();
          v.procedures = vj.at("p").get<std::vector<std::size_t>>();
          v.medications = vj.at("m").get<std::vector<std::size_t>>();
          rec.visits.push_back(std::move(v));
        }
        ds.patients.push_back(std::move(rec));
      } else if (type == "ehr_graph") {
        edges_from_json(j.at("edges"), ds.graphs.ehr_adj, ds.graphs.n_med,
                        "ehr_graph");
        have_ehr = true;
      } else if (type == "ddi_graph") {
        edges_from_json(j.at("edges"), ds.graphs.ddi_adj, ds.graphs.n_med,
                        "ddi_graph");
        have_ddi = true;
      } else if (type == "molecules") {
        for (const auto& mj : j.at("molecules")) {
          Molecule mol;
          mol.atom_types = mj.at("types").get<std::vector<int>>();
          for (const auto& e : mj.at("edges")) {
            std::size_t a = e.at(0), b = e.at(1);
            mol.edges.emplace_back(std::min(a, b), std::max(a, b));
          }
          ds.graphs.molecules.push_back(std::move(mol));
        }
        have_mols = true;
      } else {
        throw ParseError("unknown record type '" + type + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError(path + ": missing header record");
  if (!have_ehr || !have_ddi || !have_mols)
    throw ParseError(path + ": missing graph sections");
  validate_dataset(ds);
  return ds;
}

}  // namespace acdnet
