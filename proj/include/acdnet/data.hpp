// Patients, code vocabularies, and the three medicine knowledge graphs,
// plus synthetic corpus generation, 4:1:1 splitting, and dataset file I/O.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace acdnet {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Visit {
  std::vector<std::size_t> diagnoses;
  std::vector<std::size_t> procedures;
  std::vector<std::size_t> medications;
};

struct PatientRecord {
  std::string id;
  std::vector<Visit> visits;  // chronological, length >= 1
};

struct Vocab {
  std::size_t n_diag = 0;
  std::size_t n_proc = 0;
  std::size_t n_med = 0;
};

struct Molecule {
  std::vector<int> atom_types;  // one entry per atom
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // u < v
  std::size_t atoms() const { return atom_types.size(); }
  // Dense symmetric 0/1 adjacency, zero diagonal.
  std::vector<std::uint8_t> adjacency() const;
};

struct KnowledgeGraphs {
  std::size_t n_med = 0;
  std::vector<std::uint8_t> ehr_adj;  // n_med x n_med, symmetric, zero diag
  std::vector<std::uint8_t> ddi_adj;
  std::vector<Molecule> molecules;    // one per medicine

  std::size_t ddi_pair_count() const;
  std::size_t ehr_pair_count() const;
};

struct GenConfig {
  std::size_t n_diagnoses = 100;
  std::size_t n_procedures = 60;
  std::size_t n_medicines = 131;
  std::size_t n_patients = 600;
  std::size_t n_profiles = 6;
  double mean_visits = 2.4;
  std::size_t max_visits = 10;
  double mean_diagnoses = 8.0;
  double mean_procedures = 3.0;
  double mean_medications = 7.0;
  // Probability a code comes from the visit's disease-profile pool rather
  // than the whole vocabulary; higher means medications are more
  // predictable from diagnoses.
  double profile_purity = 0.9;
  double profile_persistence = 0.8;
  // Noise-free mode: each visit carries its profile's exact code pools,
  // making the code-to-medication mapping deterministic.
  bool full_pool_codes = false;
  std::size_t ddi_pairs = 448;
  double ddi_ehr_overlap = 0.5;
  std::size_t atom_min = 4;
  std::size_t atom_max = 30;
  std::size_t atom_type_count = 8;
  double mol_edge_prob = 0.15;
};

struct Dataset {
  Vocab vocab;
  std::vector<PatientRecord> patients;
  KnowledgeGraphs graphs;
  GenConfig gen;  // config the corpus was generated with (echoed in files)
};

struct DatasetSummary {
  std::size_t patients = 0;
  std::size_t clinical_events = 0;  // total visits
  std::size_t diagnoses = 0, procedures = 0, medicines = 0;
  double avg_visits = 0;
  std::size_t max_visits = 0;
  double avg_diag = 0, avg_proc = 0, avg_med = 0;
  std::size_t max_diag = 0, max_proc = 0, max_med = 0;
  std::size_t ddi_pairs = 0;
  std::string to_text() const;
};

DatasetSummary summarize(const Dataset& ds);

Dataset generate_synthetic(const GenConfig& config, std::uint64_t seed);

struct Split {
  std::vector<PatientRecord> train, val, test;
};

Split split_dataset(const std::vector<PatientRecord>& patients,
                    std::uint64_t seed, std::size_t r_train = 4,
                    std::size_t r_val = 1, std::size_t r_test = 1);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Structural validation shared by the generator and the loader; throws
// ParseError on any violated invariant.
void validate_dataset(const Dataset& ds);

}  // namespace acdnet
