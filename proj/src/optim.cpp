#include "snf/optim.hpp"

#include <algorithm>
#include <cmath>

#include "snf/errors.hpp"

namespace snf {

OptimState make_adam_state(const ParamSet& params, AdamConfig config) {
  OptimState state;
  state.config = config;
  for (const std::string& id : params.trainable_ids()) {
    const auto& shape = params.at(id).value().shape();
    state.first_moment.emplace(id, Tensor(shape, 0.0));
    state.second_moment.emplace(id, Tensor(shape, 0.0));
  }
  return state;
}

void adam_step(ParamSet& params, const GradMap& grads, OptimState& state) {
  const auto trainable = params.trainable_ids();
  for (const std::string& id : trainable) {
    if (!grads.contains(id)) throw ContractError("adam_step: missing gradient for '" + id + "'");
  }
  for (const auto& [id, _] : grads) {
    if (!params.contains(id) || params.is_frozen(id)) {
      throw ContractError("adam_step: gradient for non-trainable id '" + id + "'");
    }
  }

  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  for (const std::string& id : trainable) {
    const Tensor& g = grads.at(id);
    Tensor& w = params.at(id).mutable_value();
    if (!g.same_shape(w)) {
      throw DimensionError("adam_step: gradient shape " + shape_string(g.shape()) + " for '" + id +
                           "' of shape " + shape_string(w.shape()));
    }
    Tensor& m = state.first_moment.try_emplace(id, w.shape(), 0.0).first->second;
    Tensor& v = state.second_moment.try_emplace(id, w.shape(), 0.0).first->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

GradCheckReport finite_diff_check(const LossFn& loss_fn, ParamSet& params,
                                  GradCheckOptions options) {
  const GradMap analytic = backward(loss_fn(params), params);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (const auto& [id, grad] : analytic) {
    ParamGradError entry{id, 0.0, 0.0, grad.size()};
    Tensor& w = params.at(id).mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + options.step;
      const double up = loss_fn(params).value().item();
      w[i] = saved - options.step;
      const double down = loss_fn(params).value().item();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double abs_err = std::fabs(numeric - grad[i]);
      const double denom = std::max({std::fabs(numeric), std::fabs(grad[i]), options.floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    if (entry.max_rel_error >= report.worst_rel_error) {
      report.worst_rel_error = entry.max_rel_error;
      report.worst_id = id;
    }
    report.params.push_back(entry);
  }
  return report;
}

}  // namespace snf
