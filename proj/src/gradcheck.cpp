#include "acdnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "acdnet/train.hpp"

namespace acdnet {

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "checked %zu scalars, max rel err %.3e",
                checked, max_rel_err);
  os << buf;
  if (checked) {
    std::snprintf(buf, sizeof buf,
                  " (worst %s[%zu]: analytic %.6e, numeric %.6e)",
                  worst_param.c_str(), worst_index, worst_analytic,
                  worst_numeric);
    os << buf;
  }
  return os.str();
}

GradCheckReport check_gradients(ParamRegistry& params,
                                const std::function<Tensor()>& loss_fn,
                                const GradCheckOptions& opts) {
  params.zero_grad();
  Tensor loss = loss_fn();
  if (loss.size() != 1)
    throw ShapeError("gradient check needs a scalar loss");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.count());
  for (const auto& [name, t] : params.items()) analytic.push_back(t.grad());

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  NoGradGuard no_grad;
  std::size_t pi = 0;
  for (const auto& [name, t] : params.items()) {
    Tensor handle = t;
    std::vector<std::size_t> idx(handle.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_per_param && idx.size() > opts.max_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_per_param);
    }
    for (std::size_t i : idx) {
      double saved = handle.data()[i];
      handle.data()[i] = saved + opts.h;
      double fp = loss_fn().item();
      handle.data()[i] = saved - opts.h;
      double fm = loss_fn().item();
      handle.data()[i] = saved;
      double fd = (fp - fm) / (2.0 * opts.h);
      double g = analytic[pi][i] * opts.analytic_scale;
      double denom = std::max({std::fabs(fd), std::fabs(g), opts.denom_floor});
      double rel = std::fabs(fd - g) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = g;
        report.worst_numeric = fd;
      }
    }
    ++pi;
  }
  return report;
}

namespace {

// Deterministic non-trainable weights so every output element contributes
// a distinct amount to the scalar loss.
Tensor probe_weights(const Shape& shape, std::uint64_t salt) {
  std::mt19937_64 rng(salt * 977 + 13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  return Tensor::from(shape, std::move(w));
}

Tensor probe_sum(const Tensor& x, std::uint64_t salt) {
  return sum_all(mul(x, probe_weights(x.shape(), salt)));
}

using Battery = std::vector<std::pair<std::string, GradCheckReport>>;

void run_case(Battery& out, const std::string& name, ParamRegistry& reg,
              const std::function<Tensor()>& loss_fn) {
  out.emplace_back(name, check_gradients(reg, loss_fn));
}

}  // namespace

std::vector<std::pair<std::string, GradCheckReport>> run_primitive_checks(
    std::uint64_t seed) {
  Battery out;
  std::mt19937_64 rng(seed);

  {
    ParamRegistry reg;
    Tensor a = reg.add_uniform("a", {3, 4}, 1.0, rng);
    Tensor b = reg.add_uniform("b", {4, 2}, 1.0, rng);
    Tensor v = reg.add_uniform("v", {3}, 1.0, rng);
    Tensor w = reg.add_uniform("w", {4}, 1.0, rng);
    run_case(out, "matmul(mat,mat)", reg,
             [&] { return probe_sum(matmul(a, b), 1); });
    run_case(out, "matmul(vec,mat)", reg,
             [&] { return probe_sum(matmul(w, transpose(a)), 2); });
    run_case(out, "matmul(mat,vec)", reg,
             [&] { return probe_sum(matmul(a, w), 3); });
    run_case(out, "matmul(vec,vec)", reg, [&] { return matmul(v, v); });
    run_case(out, "transpose", reg,
             [&] { return probe_sum(transpose(a), 4); });
  }
  {
    ParamRegistry reg;
    Tensor x = reg.add_uniform("x", {3, 5}, 2.0, rng);
    run_case(out, "softmax(axis=0)", reg,
             [&] { return probe_sum(softmax(x, 0), 5); });
    run_case(out, "softmax(axis=1)", reg,
             [&] { return probe_sum(softmax(x, 1), 6); });
    run_case(out, "tanh", reg, [&] { return probe_sum(tanh(x), 7); });
    run_case(out, "sigmoid", reg, [&] { return probe_sum(sigmoid(x), 8); });
    run_case(out, "relu", reg, [&] { return probe_sum(relu(x), 9); });
    run_case(out, "leaky_relu", reg,
             [&] { return probe_sum(leaky_relu(x, 0.2), 10); });
    run_case(out, "clamp", reg,
             [&] { return probe_sum(clamp(x, -1.3, 1.3), 11); });
    run_case(out, "sum(axis=0)", reg,
             [&] { return probe_sum(sum(x, 0), 12); });
    run_case(out, "mean(axis=1)", reg,
             [&] { return probe_sum(mean(x, 1), 13); });
    run_case(out, "mean_rows", reg,
             [&] { return probe_sum(mean_rows(x), 14); });
    run_case(out, "sum_all", reg, [&] { return sum_all(x); });
    run_case(out, "slice_cols", reg,
             [&] { return probe_sum(slice_cols(x, 1, 4), 15); });
    run_case(out, "row", reg, [&] { return probe_sum(row(x, 1), 16); });
    run_case(out, "rows", reg,
             [&] { return probe_sum(rows(x, {2, 0, 2}), 17); });
  }
  {
    ParamRegistry reg;
    Tensor x = reg.add_uniform("x", {4}, 1.5, rng);
    Tensor pos = reg.add("pos", Tensor::from({4}, {0.3, 1.1, 0.6, 2.2}, true));
    run_case(out, "log", reg, [&] { return probe_sum(log(pos), 18); });
    run_case(out, "reshape/flatten", reg, [&] {
      return probe_sum(flatten(reshape_to_row(x)), 19);
    });
  }
  {
    ParamRegistry reg;
    Tensor a = reg.add_uniform("a", {3, 4}, 1.0, rng);
    Tensor b = reg.add_uniform("b", {3, 4}, 1.0, rng);
    Tensor r = reg.add_uniform("r", {4}, 1.0, rng);
    Tensor s = reg.add("s", Tensor::from({}, {0.7}, true));
    run_case(out, "add", reg, [&] { return probe_sum(add(a, b), 20); });
    run_case(out, "sub", reg, [&] { return probe_sum(sub(a, b), 21); });
    run_case(out, "mul", reg, [&] { return probe_sum(mul(a, b), 22); });
    run_case(out, "add(row broadcast)", reg,
             [&] { return probe_sum(add(a, r), 23); });
    run_case(out, "mul(scalar broadcast)", reg,
             [&] { return probe_sum(mul(s, a), 24); });
    run_case(out, "scale", reg, [&] { return probe_sum(scale(a, -1.7), 25); });
    run_case(out, "concat(axis=0)", reg,
             [&] { return probe_sum(concat({a, b}, 0), 26); });
    run_case(out, "concat(axis=1)", reg,
             [&] { return probe_sum(concat({a, b}, 1), 27); });
    run_case(out, "stack_rows", reg, [&] {
      return probe_sum(stack_rows({row(a, 0), r, row(b, 2)}), 28);
    });
    run_case(out, "outer_sum", reg, [&] {
      return probe_sum(outer_sum(row(a, 1), r), 29);
    });
  }
  {
    ParamRegistry reg;
    Tensor g = reg.add("g", Tensor::from({4}, {1.1, 0.9, 1.0, 1.2}, true));
    Tensor b = reg.add_uniform("b", {4}, 0.5, rng);
    Tensor x = reg.add_uniform("x", {3, 4}, 2.0, rng);
    run_case(out, "layernorm", reg,
             [&] { return probe_sum(layernorm(x, g, b), 30); });
  }
  {
    ParamRegistry reg;
    Tensor a = reg.add_uniform("a", {5}, 1.0, rng);
    Tensor m = reg.add_uniform("m", {3, 5}, 1.0, rng);
    run_case(out, "cosine_rows", reg,
             [&] { return probe_sum(cosine_rows(a, m), 31); });
  }
  {
    ParamRegistry reg;
    Tensor s = reg.add_uniform("s", {3, 3}, 1.5, rng);
    std::vector<std::uint8_t> mask = {1, 1, 0, 0, 1, 1, 1, 0, 1};
    run_case(out, "masked_row_softmax", reg, [&] {
      return probe_sum(masked_row_softmax(s, mask), 32);
    });
  }
  {
    ParamRegistry reg;
    Tensor z = reg.add_uniform("z", {6}, 2.0, rng);
    std::vector<double> target = {1, 0, 1, 1, 0, 0};
    run_case(out, "bce_sum", reg,
             [&] { return bce_sum(sigmoid(z), target); });
    run_case(out, "margin_loss", reg,
             [&] { return margin_loss(sigmoid(z), target); });
  }
  return out;
}

GradCheckReport check_model_gradients(const CompositeCheckConfig& cc) {
  GenConfig gen;
  gen.n_diagnoses = 12;
  gen.n_procedures = 8;
  gen.n_medicines = 5;
  gen.n_patients = 6;
  gen.n_profiles = 2;
  gen.mean_visits = 3.0;
  gen.max_visits = 4;
  gen.mean_diagnoses = 3.0;
  gen.mean_procedures = 2.0;
  gen.mean_medications = 2.5;
  gen.ddi_pairs = 3;
  gen.atom_min = 4;
  gen.atom_max = 8;
  gen.atom_type_count = 4;
  Dataset ds = generate_synthetic(gen, cc.seed);

  ModelConfig mc;
  mc.encoder.dim = cc.dim;
  mc.encoder.heads = cc.heads;
  mc.encoder.layers = cc.layers;
  mc.atom_type_count = gen.atom_type_count;
  AcdNet model(ds.vocab, mc, cc.variant, cc.seed + 1);
  model.set_graphs(ds.graphs);

  const PatientRecord* rec = &ds.patients.front();
  for (const auto& p : ds.patients)
    if (p.visits.size() >= 2) {
      rec = &p;
      break;
    }

  auto loss_fn = [&]() {
    MedicineMatrix m;
    if (model.needs_medicine_matrix()) m = model.build_medicine_matrix();
    Tensor total;
    for (std::size_t t = 0; t < rec->visits.size(); ++t) {
      auto fwd = model.forward(AcdNet::history_for(*rec, t), m);
      Tensor l = combined_loss(fwd.head.o_hat, rec->visits[t].medications,
                               ds.vocab.n_med, cc.lambda);
      total = total.defined() ? add(total, l) : l;
    }
    return total;
  };

  GradCheckOptions opts;
  opts.h = cc.h;
  opts.max_per_param = cc.max_per_param;
  opts.seed = cc.seed;
  return check_gradients(model.params(), loss_fn, opts);
}

}  // namespace acdnet
