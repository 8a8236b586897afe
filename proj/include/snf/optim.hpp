#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "snf/params.hpp"

namespace snf {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

OptimState make_adam_state(const ParamSet& params, AdamConfig config = {});

/// One bias-corrected Adam update of every trainable tensor.
/// `grads` must cover exactly the trainable ids (ContractError otherwise);
/// frozen tensors are never touched.
void adam_step(ParamSet& params, const GradMap& grads, OptimState& state);

// Central-difference verification of reverse-mode gradients.

struct ParamGradError {
  std::string id;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;  // trainable ids only, lexical order
  double worst_rel_error = 0.0;
  std::string worst_id;
  double tolerance = 0.0;
  bool passed() const { return worst_rel_error <= tolerance; }
};

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

using LossFn = std::function<Var(ParamSet&)>;

GradCheckReport finite_diff_check(const LossFn& loss_fn, ParamSet& params,
                                  GradCheckOptions options = {});

}  // namespace snf
