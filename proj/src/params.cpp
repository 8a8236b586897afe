#include "snf/params.hpp"

#include "snf/errors.hpp"

namespace snf {

namespace {

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Var& ParamSet::add(const std::string& id, Tensor value, bool frozen) {
  if (vars_.contains(id)) throw ContractError("duplicate parameter id '" + id + "'");
  if (!value.all_finite()) throw NumericError("parameter '" + id + "' initialised non-finite");
  if (frozen) frozen_.insert(id);
  return vars_.emplace(id, Var::leaf(std::move(value), !frozen)).first->second;
}

const Var& ParamSet::at(const std::string& id) const {
  auto it = vars_.find(id);
  if (it == vars_.end()) throw ContractError("unknown parameter id '" + id + "'");
  return it->second;
}

Var& ParamSet::at(const std::string& id) {
  auto it = vars_.find(id);
  if (it == vars_.end()) throw ContractError("unknown parameter id '" + id + "'");
  return it->second;
}

std::vector<std::string> ParamSet::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : vars_) out.push_back(id);
  return out;
}

std::vector<std::string> ParamSet::trainable_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : vars_)
    if (!frozen_.contains(id)) out.push_back(id);
  return out;
}

std::vector<std::string> ParamSet::frozen_ids() const { return {frozen_.begin(), frozen_.end()}; }

std::map<std::string, Tensor> ParamSet::values() const {
  std::map<std::string, Tensor> out;
  for (const auto& [id, v] : vars_) out.emplace(id, v.value());
  return out;
}

void ParamSet::assign(const std::map<std::string, Tensor>& values) {
  for (const auto& [id, t] : values) {
    Var& v = at(id);
    if (!v.value().same_shape(t)) {
      throw DimensionError("parameter '" + id + "' shape " + shape_string(v.value().shape()) +
                           " cannot take " + shape_string(t.shape()));
    }
    v.mutable_value() = t;
  }
}

void ParamSet::zero_grad() {
  for (auto& [_, v] : vars_) v.zero_grad();
}

GradMap backward(const Var& loss, ParamSet& params) {
  params.zero_grad();
  backward(loss);
  GradMap grads;
  for (const std::string& id : params.trainable_ids()) {
    const Var& v = params.at(id);
    grads.emplace(id, v.has_grad() ? v.grad() : Tensor(v.value().shape(), 0.0));
  }
  params.zero_grad();
  return grads;
}

std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
  const std::uint64_t h = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

Tensor gaussian(std::uint64_t seed, std::string_view name, std::vector<std::size_t> shape,
                double stddev) {
  Tensor t(std::move(shape));
  auto rng = substream(seed, name);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace snf
