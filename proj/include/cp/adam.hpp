#pragma once

#include <cstdint>
#include <functional>

#include "cp/tensor.hpp"

namespace cp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParamSet m;
  ParamSet v;

  AdamState() = default;
  AdamState(const ParamSet& params, AdamConfig cfg);
};

// One bias-corrected Adam update; increments state.step.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

// Rescales grads so their global L2 norm is at most max_norm (<= 0 disables).
// Returns the norm before clipping.
double clip_global_norm(ParamSet& grads, double max_norm);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares analytic gradients with central differences of `objective`.
// Relative error is |a - n| / max(|a|, |n|, floor). `max_per_tensor` > 0
// checks an evenly strided subset of each tensor.
GradCheckResult check_gradients(ParamSet params, const ParamSet& analytic,
                                const std::function<double(const ParamSet&)>& objective, double step = 1e-6,
                                double floor = 1e-5, std::size_t max_per_tensor = 0);

}  // namespace cp
