#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "snf/autodiff.hpp"

namespace snf {

using GradMap = std::map<std::string, Tensor>;

/// Named parameter tensors, split into trainable and frozen ids.
///
/// Iteration order is the lexical order of ids, which is what
/// checkpoints, gradient reports and optimizer updates rely on.
class ParamSet {
 public:
  /// Registers a new tensor. Frozen tensors are leaves without gradients.
  Var& add(const std::string& id, Tensor value, bool frozen = false);

  bool contains(const std::string& id) const { return vars_.contains(id); }
  bool is_frozen(const std::string& id) const { return frozen_.contains(id); }
  const Var& at(const std::string& id) const;
  Var& at(const std::string& id);

  std::vector<std::string> ids() const;
  std::vector<std::string> trainable_ids() const;
  std::vector<std::string> frozen_ids() const;
  std::size_t size() const { return vars_.size(); }

  /// Snapshot of all values, keyed by id.
  std::map<std::string, Tensor> values() const;
  /// Overwrites values of existing ids; shapes must match.
  void assign(const std::map<std::string, Tensor>& values);

  void zero_grad();

  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  std::map<std::string, Var> vars_;
  std::set<std::string> frozen_;
};

/// Reverse-mode pass over `loss`; returns gradients of every trainable id
/// (zeros for trainable ids the loss does not reach). Frozen ids are absent.
/// Parameter gradient buffers are cleared before and after.
GradMap backward(const Var& loss, ParamSet& params);

/// Deterministic per-name random stream: the same (seed, name) pair always
/// yields the same sequence, independent of how many other streams exist.
std::mt19937_64 substream(std::uint64_t seed, std::string_view name);

/// Tensor of i.i.d. N(0, stddev²) entries drawn from substream(seed, name).
Tensor gaussian(std::uint64_t seed, std::string_view name, std::vector<std::size_t> shape,
                double stddev);

}  // namespace snf
