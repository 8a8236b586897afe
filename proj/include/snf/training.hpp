#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snf/dataset.hpp"
#include "snf/model.hpp"
#include "snf/optim.hpp"

namespace snf {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch = 4;
  std::size_t max_epochs = 15;
  std::size_t patience = 5;
  /// Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
  std::uint64_t seed = 42;
};

/// Mean of squared differences over every element; ContractError on shape mismatch.
Var mse_loss(const Var& pred, const Var& target);

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
};
Metrics metrics(std::span<const double> pred, std::span<const double> target);

/// Patience counter over validation losses; improvement must be strict.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the loss of `epoch` (1-based); returns true on a new best.
  bool update(std::size_t epoch, double loss);
  bool should_stop() const noexcept { return stale_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // cumulative
  double train_loss = 0.0;
  double val_mse = 0.0;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  std::size_t steps = 0;
  bool stopped_early = false;

  std::string history_csv() const;
};

/// Mini-batch Adam on the train split with per-epoch seeded shuffling,
/// validation MSE early stopping, and best-checkpoint restoration.
/// NumericError naming the first non-finite parameter if the loss diverges.
TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& config);

/// MSE over every target element of a split.
double split_mse(const Model& model, const Dataset& dataset, Split split);

struct StockMetrics {
  std::string stock_id;
  std::size_t samples = 0;
  Metrics metrics;
};

struct EvalReport {
  std::vector<StockMetrics> stocks;
  Metrics average;  // unweighted mean over stocks
  std::uint64_t seed = 0;
  std::string config_hash;

  /// Columns stock,MAE,MSE with a final "average" row.
  std::string to_csv() const;
};

/// Per-stock MAE/MSE on normalized targets, in dataset stock order.
EvalReport evaluate(const Model& model, const Dataset& dataset, Split split = Split::test);

struct PredictionRow {
  std::string stock_id;
  Date date;
  std::size_t step = 0;  // 1..H
  double predicted = 0.0;
  double actual = 0.0;
};
std::vector<PredictionRow> predictions(const Model& model, const Dataset& dataset, Split split);

// Checkpoints: "SNFUSE01", 32-byte config hash, u32 count, then per tensor
// u32 id length, id, u32 rank, u64 extents, f64 payload (little-endian).

inline constexpr std::string_view kCheckpointMagic = "SNFUSE01";

/// Config hash as 64 hex characters; name embeddings are stored as "context/<id>".
std::string encode_checkpoint(const Model& model, const std::string& config_hash);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& config_hash);

struct CheckpointData {
  std::string config_hash;
  std::map<std::string, Tensor> tensors;
};
CheckpointData decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");
/// Loads into an already-configured model. FormatError when the stored
/// config hash differs from `expected_hash` or tensors do not match.
void load_checkpoint(const std::filesystem::path& path, Model& model, const std::string& expected_hash);

}  // namespace snf
