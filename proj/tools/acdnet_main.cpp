// Command-line front end: corpus generation, training, evaluation,
// ablation comparison, per-patient prediction, and gradient checking.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "acdnet/checkpoint.hpp"
#include "acdnet/gradcheck.hpp"
#include "acdnet/presets.hpp"
#include "acdnet/train.hpp"
#include "json.hpp"

namespace {

using namespace acdnet;
using nlohmann::json;

struct RunConfig {
  TrainConfig train;
  std::string variant = "full";
  std::size_t dim = 64;
  std::size_t heads = 8;
  std::size_t layers = 6;
  bool positional_encoding = true;
  std::size_t rounds = 10;
  double fraction = 0.8;
};

// Applies a JSON config file onto the defaults; command-line flags are
// parsed afterwards and win. Unknown keys are an error.
void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
  static const std::set<std::string> known = {
      "epochs",   "lr",     "lambda", "threshold",           "seed",
      "variant",  "dim",    "heads",  "layers",              "rounds",
      "fraction", "step_per_epoch",   "positional_encoding"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw ConfigError("unknown config key '" + key + "' in " + path);
    if (key == "epochs") cfg.train.epochs = value;
    else if (key == "lr") cfg.train.lr = value;
    else if (key == "lambda") cfg.train.lambda = value;
    else if (key == "threshold") cfg.train.threshold = value;
    else if (key == "seed") cfg.train.seed = value;
    else if (key == "step_per_epoch") cfg.train.step_per_epoch = value;
    else if (key == "variant") cfg.variant = value;
    else if (key == "dim") cfg.dim = value;
    else if (key == "heads") cfg.heads = value;
    else if (key == "layers") cfg.layers = value;
    else if (key == "positional_encoding") cfg.positional_encoding = value;
    else if (key == "rounds") cfg.rounds = value;
    else if (key == "fraction") cfg.fraction = value;
  }
}

json effective_config_json(const RunConfig& cfg) {
  return json{{"epochs", cfg.train.epochs},
              {"lr", cfg.train.lr},
              {"lambda", cfg.train.lambda},
              {"threshold", cfg.train.threshold},
              {"seed", cfg.train.seed},
              {"step_per_epoch", cfg.train.step_per_epoch},
              {"variant", cfg.variant},
              {"dim", cfg.dim},
              {"heads", cfg.heads},
              {"layers", cfg.layers},
              {"positional_encoding", cfg.positional_encoding},
              {"rounds", cfg.rounds},
              {"fraction", cfg.fraction}};
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig mc;
  mc.encoder.dim = cfg.dim;
  mc.encoder.heads = cfg.heads;
  mc.encoder.layers = cfg.layers;
  mc.encoder.positional_encoding = cfg.positional_encoding;
  return mc;
}

AcdNet load_model(const std::string& path) {
  ParamRegistry saved;
  std::string snapshot = load_checkpoint(saved, path);
  AcdNet model = AcdNet::from_snapshot_json(snapshot);
  for (const auto& [name, t] : saved.items()) {
    if (!model.params().contains(name))
      throw IoError("checkpoint parameter " + name +
                    " does not exist in the rebuilt model");
    Tensor dst = model.params().get(name);
    if (dst.shape() != t.shape())
      throw IoError("checkpoint parameter " + name + " has shape " +
                    shape_str(t.shape()) + ", model expects " +
                    shape_str(dst.shape()));
    dst.data() = t.data();
  }
  return model;
}

void require_vocab_match(const AcdNet& model, const Dataset& ds,
                         const std::string& ckpt, const std::string& data) {
  const Vocab& a = model.vocab();
  const Vocab& b = ds.vocab;
  if (a.n_diag != b.n_diag || a.n_proc != b.n_proc || a.n_med != b.n_med)
    throw ConfigError("vocabulary mismatch: checkpoint " + ckpt + " was "
                      "trained with " + std::to_string(a.n_diag) + "/" +
                      std::to_string(a.n_proc) + "/" + std::to_string(a.n_med) +
                      " codes but dataset " + data + " has " +
                      std::to_string(b.n_diag) + "/" +
                      std::to_string(b.n_proc) + "/" + std::to_string(b.n_med));
}

const std::vector<PatientRecord>& pick_split(const Split& split,
                                             const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "'");
}

int cmd_gen_data(const std::string& out, const std::string& preset,
                 GenConfig gen, std::uint64_t seed) {
  if (preset != "default" && preset != "overfit" && preset != "hard")
    throw ConfigError("unknown preset '" + preset + "'");
  Dataset ds = generate_synthetic(gen, seed);
  save_dataset(ds, out);
  std::cout << summarize(ds).to_text();
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& ckpt_out,
              const RunConfig& cfg) {
  Dataset ds = load_dataset(dataset_path);
  Split split = split_dataset(ds.patients, cfg.train.seed);
  AcdNet model(ds.vocab, model_config(cfg), variant_from_name(cfg.variant),
               cfg.train.seed);
  model.set_graphs(ds.graphs);
  std::cout << "config: " << effective_config_json(cfg).dump() << "\n";
  std::cout << "split: " << split.train.size() << " train / "
            << split.val.size() << " val / " << split.test.size()
            << " test patients\n";
  train_model(model, split, ds.graphs, cfg.train, &std::cout);
  MetricValues test =
      evaluate_split(model, split.test, ds.graphs, cfg.train.threshold);
  std::cout << "test:";
  for (const auto& name : metric_names()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %s=%.4f", name.c_str(),
                  test.by_name(name));
    std::cout << buf;
  }
  std::cout << "\n";
  if (!ckpt_out.empty()) {
    save_checkpoint(model.params(), model.config_snapshot_json(), ckpt_out);
    std::cout << "saved checkpoint " << ckpt_out << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& dataset_path, const std::string& ckpt,
             const std::string& split_name, const RunConfig& cfg,
             const std::string& json_out) {
  Dataset ds = load_dataset(dataset_path);
  AcdNet model = load_model(ckpt);
  require_vocab_match(model, ds, ckpt, dataset_path);
  model.set_graphs(ds.graphs);
  Split split = split_dataset(ds.patients, cfg.train.seed);
  const auto& patients = pick_split(split, split_name);
  EvalReport report =
      bootstrap_eval(model, patients, ds.graphs, cfg.rounds, cfg.fraction,
                     cfg.train.seed, cfg.train.threshold);
  std::cout << report.to_text();
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw IoError("cannot write " + json_out);
    json j = json::parse(report.to_json());
    j["config"] = effective_config_json(cfg);
    j["split"] = split_name;
    out << j.dump(2) << "\n";
    std::cout << "wrote " << json_out << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& dataset_path,
               std::vector<std::string> variants, const RunConfig& cfg) {
  Dataset ds = load_dataset(dataset_path);
  Split split = split_dataset(ds.patients, cfg.train.seed);
  if (variants.empty())
    for (Variant v : all_variants()) variants.push_back(variant_name(v));
  std::cout << "config: " << effective_config_json(cfg).dump() << "\n";
  std::printf("%-12s %9s %9s %9s %9s\n", "variant", "jaccard", "f1", "prauc",
              "ddi_rate");
  for (const auto& name : variants) {
    AcdNet model(ds.vocab, model_config(cfg), variant_from_name(name),
                 cfg.train.seed);
    model.set_graphs(ds.graphs);
    train_model(model, split, ds.graphs, cfg.train, nullptr);
    MetricValues m =
        evaluate_split(model, split.test, ds.graphs, cfg.train.threshold);
    std::printf("%-12s %9.4f %9.4f %9.4f %9.4f\n", name.c_str(), m.jaccard,
                m.f1, m.prauc, m.ddi_rate);
    std::fflush(stdout);
  }
  return 0;
}

int cmd_predict(const std::string& dataset_path, const std::string& ckpt,
                const std::string& patient_id, const RunConfig& cfg) {
  Dataset ds = load_dataset(dataset_path);
  AcdNet model = load_model(ckpt);
  require_vocab_match(model, ds, ckpt, dataset_path);
  model.set_graphs(ds.graphs);
  const PatientRecord* rec = nullptr;
  if (patient_id.empty()) {
    rec = &ds.patients.front();
  } else {
    for (const auto& p : ds.patients)
      if (p.id == patient_id) rec = &p;
    if (!rec) throw ConfigError("no patient with id '" + patient_id + "'");
  }
  NoGradGuard no_grad;
  MedicineMatrix m;
  if (model.needs_medicine_matrix()) m = model.build_medicine_matrix();
  std::cout << "patient " << rec->id << " (" << rec->visits.size()
            << " visits)\n";
  auto join = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (auto x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
    return s.empty() ? "-" : s;
  };
  for (std::size_t t = 0; t < rec->visits.size(); ++t) {
    auto fwd = model.forward(AcdNet::history_for(*rec, t), m);
    auto pred = predict_set(fwd.head.o_hat.data(), cfg.train.threshold);
    std::set<std::size_t> sp(pred.begin(), pred.end());
    std::set<std::size_t> st(rec->visits[t].medications.begin(),
                             rec->visits[t].medications.end());
    std::vector<std::size_t> correct, unseen, missed;
    for (auto x : sp) (st.count(x) ? correct : unseen).push_back(x);
    for (auto x : st)
      if (!sp.count(x)) missed.push_back(x);
    std::cout << "visit " << t + 1 << ":\n";
    std::cout << "  correct: " << join(correct) << "\n";
    std::cout << "  unseen:  " << join(unseen) << "\n";
    std::cout << "  missed:  " << join(missed) << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool composite_only) {
  bool ok = true;
  if (!composite_only) {
    for (const auto& [name, report] : run_primitive_checks(seed)) {
      bool pass = report.ok(1e-5);
      ok = ok && pass;
      std::printf("%-22s %s  %s\n", name.c_str(), pass ? "ok  " : "FAIL",
                  report.to_text().c_str());
    }
  }
  CompositeCheckConfig cc;
  cc.seed = seed;
  GradCheckReport composite = check_model_gradients(cc);
  bool pass = composite.ok(1e-4);
  ok = ok && pass;
  std::printf("%-22s %s  %s\n", "full model", pass ? "ok  " : "FAIL",
              composite.to_text().c_str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medication recommendation over synthetic EHR corpora"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path, dataset_path, ckpt_path, out_path, json_out;
  std::string preset = "default", split_name = "test", patient_id;
  std::vector<std::string> variants;
  GenConfig gen;
  bool composite_only = false;
  bool no_pos = false;

  // The config file and generator preset are applied before flag parsing
  // so individual flags win over both.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    if (std::string(argv[i]) == "--preset") preset = argv[i + 1];
  }
  if (preset == "overfit") gen = presets::overfit_corpus();
  else if (preset == "hard") gen = presets::hard_corpus();

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON config file (flags override it)");
    cmd->add_option("--seed", cfg.train.seed, "random seed");
    cmd->add_option("--epochs", cfg.train.epochs, "training epochs");
    cmd->add_option("--lr", cfg.train.lr, "Adam learning rate");
    cmd->add_option("--lambda", cfg.train.lambda,
                    "cross-entropy weight in the combined loss");
    cmd->add_option("--threshold", cfg.train.threshold,
                    "probability cutoff for the predicted set");
    cmd->add_flag("--step-per-epoch", cfg.train.step_per_epoch,
                  "accumulate gradients across the epoch before stepping");
    cmd->add_option("--dim", cfg.dim, "embedding width");
    cmd->add_option("--heads", cfg.heads, "attention heads");
    cmd->add_option("--layers", cfg.layers, "encoder layers");
    cmd->add_flag("--no-positional-encoding", no_pos,
                  "disable the sinusoidal position table");
  };

  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen_cmd->add_option("--out", out_path, "output dataset path")->required();
  gen_cmd->add_option("--seed", cfg.train.seed, "random seed");
  gen_cmd->add_option("--preset", preset, "default, overfit, or hard");
  gen_cmd->add_option("--patients", gen.n_patients, "patient count");
  gen_cmd->add_option("--medicines", gen.n_medicines, "medicine vocabulary");
  gen_cmd->add_option("--diagnoses", gen.n_diagnoses, "diagnosis vocabulary");
  gen_cmd->add_option("--procedures", gen.n_procedures,
                      "procedure vocabulary");
  gen_cmd->add_option("--profiles", gen.n_profiles, "latent disease profiles");
  gen_cmd->add_option("--mean-visits", gen.mean_visits,
                      "mean visits per patient");
  gen_cmd->add_option("--purity", gen.profile_purity,
                      "probability codes come from the profile pool");
  gen_cmd->add_option("--ddi-pairs", gen.ddi_pairs, "drug interaction pairs");
  gen_cmd->add_flag("--full-pool-codes", gen.full_pool_codes,
                    "noise-free visits: each visit carries its profile's "
                    "exact code pools");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--dataset", dataset_path, "dataset path")->required();
  train_cmd->add_option("--out", ckpt_path, "checkpoint output path");
  train_cmd->add_option("--variant", cfg.variant, "model variant");
  add_model_flags(train_cmd);

  auto* eval_cmd =
      app.add_subcommand("eval", "bootstrap-evaluate a checkpoint");
  eval_cmd->add_option("--dataset", dataset_path, "dataset path")->required();
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint path")
      ->required();
  eval_cmd->add_option("--split", split_name, "train, val, or test");
  eval_cmd->add_option("--rounds", cfg.rounds, "bootstrap rounds");
  eval_cmd->add_option("--fraction", cfg.fraction,
                       "patient fraction per round");
  eval_cmd->add_option("--json", json_out, "write the report as JSON");
  eval_cmd->add_option("--config", config_path, "JSON config file");
  eval_cmd->add_option("--seed", cfg.train.seed, "random seed");
  eval_cmd->add_option("--threshold", cfg.train.threshold,
                       "probability cutoff for the predicted set");

  auto* ablate_cmd =
      app.add_subcommand("ablate", "train and compare model variants");
  ablate_cmd->add_option("--dataset", dataset_path, "dataset path")
      ->required();
  ablate_cmd->add_option("--variant", variants,
                         "variants to run (repeatable; default all)");
  add_model_flags(ablate_cmd);

  auto* predict_cmd =
      app.add_subcommand("predict", "predict medications for one patient");
  predict_cmd->add_option("--dataset", dataset_path, "dataset path")
      ->required();
  predict_cmd->add_option("--checkpoint", ckpt_path, "checkpoint path")
      ->required();
  predict_cmd->add_option("--patient", patient_id,
                          "patient id (default: first patient)");
  predict_cmd->add_option("--threshold", cfg.train.threshold,
                          "probability cutoff for the predicted set");

  auto* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cmd->add_option("--seed", cfg.train.seed, "random seed");
  grad_cmd->add_flag("--composite-only", composite_only,
                     "skip the single-op battery");

  try {
    if (!config_path.empty()) apply_config_file(config_path, cfg);
    app.parse(argc, argv);
    if (no_pos) cfg.positional_encoding = false;

    if (gen_cmd->parsed())
      return cmd_gen_data(out_path, preset, gen, cfg.train.seed);
    if (train_cmd->parsed()) return cmd_train(dataset_path, ckpt_path, cfg);
    if (eval_cmd->parsed())
      return cmd_eval(dataset_path, ckpt_path, split_name, cfg, json_out);
    if (ablate_cmd->parsed()) return cmd_ablate(dataset_path, variants, cfg);
    if (predict_cmd->parsed())
      return cmd_predict(dataset_path, ckpt_path, patient_id, cfg);
    if (grad_cmd->parsed())
      return cmd_gradcheck(cfg.train.seed, composite_only);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
