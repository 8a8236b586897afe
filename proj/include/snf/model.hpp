#pragma once

// The composed forecaster: per-day pooling → fusion → reprogramming →
// frozen backbone → head.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snf/backbone.hpp"
#include "snf/dataset.hpp"
#include "snf/fusion.hpp"
#include "snf/params.hpp"
#include "snf/pooling.hpp"

namespace snf {

struct ModelConfig {
  std::size_t dim = 0;
  std::size_t window = 20;
  std::size_t horizon = 1;
  PoolingVariant pooling = PoolingVariant::sap;
  bool snp = false;
  FusionFlags flags;
  BackboneConfig backbone;
  std::size_t positional_len = 1024;
  /// Per-window reversible normalisation of the closes: the model sees
  /// (x - mean)/std and its output is mapped back with the same statistics.
  bool revin = true;
  std::uint64_t seed = 42;
  std::optional<std::filesystem::path> vocab_file;
};

/// One window ready for the forward pass.
struct SampleInput {
  Tensor closes;                          // T×1
  std::vector<std::optional<Tensor>> news;  // T slots, nullopt on days without articles
  Tensor name;                            // 1×d
  std::vector<double> target;             // H
};

struct ForwardTrace {
  Var prediction;                 // 1×H
  Var pooled;                     // T×d, empty when pooling is none
  std::vector<PoolResult> days;   // per-day pooling detail
  FusionResult fusion;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  const PositionalTable& positions() const noexcept { return positions_; }

  /// Name embeddings keyed by stock id; saved with checkpoints.
  const std::map<std::string, Tensor>& contexts() const noexcept { return contexts_; }
  void set_contexts(const std::vector<StockContext>& stocks);
  void set_context(const std::string& stock_id, Tensor name);

  /// ContractError when the sample's stock has no context entry.
  SampleInput input(const Dataset& dataset, const WindowSample& sample) const;

  ForwardTrace trace(const SampleInput& in) const;
  Var forward(const SampleInput& in) const { return trace(in).prediction; }
  std::vector<double> predict(const SampleInput& in) const;

 private:
  ModelConfig config_;
  ParamSet params_;
  PositionalTable positions_;
  std::map<std::string, Tensor> contexts_;
};

}  // namespace snf
