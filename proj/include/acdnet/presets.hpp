// Canned generator and training configurations shared by the CLI and the
// acceptance tests.

#pragma once

#include "acdnet/data.hpp"
#include "acdnet/train.hpp"

namespace acdnet {
namespace presets {

// The stock corpus: MIMIC-III-like scale with 131 medicines and 600
// patients averaging 2.4 visits.
inline GenConfig default_corpus() { return GenConfig{}; }

// Tiny noise-free corpus a capable model should be able to memorize:
// visits carry their profile's exact code pools, so the mapping from
// codes to medications is deterministic.
inline GenConfig overfit_corpus() {
  GenConfig g;
  g.n_diagnoses = 30;
  g.n_procedures = 12;
  g.n_medicines = 24;
  g.n_patients = 50;
  g.n_profiles = 8;
  g.mean_visits = 2.0;
  g.profile_purity = 1.0;
  g.profile_persistence = 0.9;
  g.full_pool_codes = true;
  g.mean_diagnoses = 4.0;
  g.mean_procedures = 2.0;
  g.mean_medications = 4.0;
  g.ddi_pairs = 24;
  g.atom_max = 16;
  return g;
}

// Noisier mid-size corpus where the code-to-medication signal is weak;
// used for checks that compare models trained on held-out data.
inline GenConfig hard_corpus() {
  GenConfig g;
  g.n_diagnoses = 60;
  g.n_procedures = 24;
  g.n_medicines = 40;
  g.n_patients = 600;
  g.n_profiles = 5;
  g.profile_purity = 0.7;
  g.mean_diagnoses = 6.0;
  g.mean_procedures = 2.0;
  g.mean_medications = 5.0;
  g.ddi_pairs = 80;
  g.atom_max = 16;
  return g;
}

inline TrainConfig default_training() { return TrainConfig{}; }

inline TrainConfig overfit_training() {
  TrainConfig t;
  t.epochs = 100;
  return t;
}

}  // namespace presets
}  // namespace acdnet
