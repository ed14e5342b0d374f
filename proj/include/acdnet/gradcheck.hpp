// Finite-difference gradient verification for single ops and for the full
// model.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acdnet/model.hpp"
#include "acdnet/optim.hpp"

namespace acdnet {

struct GradCheckOptions {
  double h = 1e-5;              // central-difference step
  double denom_floor = 1.0;     // error is |fd-g| / max(|fd|, |g|, floor)
  std::size_t max_per_param = 0;  // 0 checks every scalar; otherwise a
                                  // random subset of this size per tensor
  std::uint64_t seed = 0;         // subset sampling seed
  double analytic_scale = 1.0;    // != 1 corrupts the analytic gradient,
                                  // for negative-control tests
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::size_t checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0, worst_numeric = 0;

  bool ok(double tol) const { return checked > 0 && max_rel_err < tol; }
  std::string to_text() const;
};

// loss_fn must rebuild the forward pass from the current parameter values
// on every call and return a scalar.
GradCheckReport check_gradients(ParamRegistry& params,
                                const std::function<Tensor()>& loss_fn,
                                const GradCheckOptions& opts = {});

// Small fixed battery over the individual differentiable ops; pairs of
// (op name, report).
std::vector<std::pair<std::string, GradCheckReport>> run_primitive_checks(
    std::uint64_t seed = 1);

// End-to-end check: a tiny synthetic world, a tiny model of the given
// variant, and the combined training loss over one multi-visit patient.
struct CompositeCheckConfig {
  std::size_t dim = 8;
  std::size_t heads = 2;
  std::size_t layers = 1;
  Variant variant = Variant::Full;
  double lambda = 0.5;
  double h = 1e-4;
  std::uint64_t seed = 7;
  std::size_t max_per_param = 0;
};

GradCheckReport check_model_gradients(const CompositeCheckConfig& cfg = {});

}  // namespace acdnet
