#pragma once

// Train-then-evaluate runs, the fusion ablation grid and multi-seed summaries.

#include <string>
#include <vector>

#include "snf/config.hpp"
#include "snf/dataset.hpp"
#include "snf/model.hpp"
#include "snf/optim.hpp"
#include "snf/training.hpp"

namespace snf {

struct RunOutcome {
  Model model;
  TrainResult training;
  EvalReport report;
  std::string config_hash;
};

/// Builds the model from `config`, trains it on `dataset` and evaluates on `split`.
RunOutcome run_experiment(const RunConfig& config, const Dataset& dataset, const std::string& manifest_hash,
                          Split split = Split::test);

struct AblationSpec {
  std::string label;
  FusionFlags flags;
};

/// The eight fusion configurations in table order, "+SAP" first.
const std::vector<AblationSpec>& ablation_specs();

struct AblationRow {
  std::string label;
  FusionFlags flags;
  std::size_t active_terms = 0;
  std::string config_hash;
  EvalReport report;
};

/// One seeded run per ablation row; `base` supplies everything but the three flags.
std::vector<AblationRow> ablation_grid(const RunConfig& base, const Dataset& dataset,
                                       const std::string& manifest_hash);
/// Columns method,active_terms,MAE,MSE.
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (k - 1)
};

/// ContractError for fewer than two values.
MeanStd mean_std(const std::vector<double>& values);

struct SeedSummaryRow {
  std::string stock_id;  // "average" for the cross-stock row
  MeanStd mae;
  MeanStd mse;
};

struct MultiSeedResult {
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> reports;
  std::vector<SeedSummaryRow> rows;

  /// Columns metric,stock,mean,std; the MAE block precedes the MSE block.
  std::string to_csv() const;
};

/// ContractError for fewer than two seeds.
MultiSeedResult multi_seed(const RunConfig& base, const Dataset& dataset, const std::string& manifest_hash,
                           const std::vector<std::uint64_t>& seeds);

/// End-to-end finite-difference check (pooling → fusion → backbone → MSE) on a
/// seeded toy instance: T=6, d=4, 0-3 articles a day, V=16, U=4, D=8.
/// Pooling, SNP, fusion flags, horizon and seed come from `config`.
GradCheckReport toy_gradient_check(const RunConfig& config);

}  // namespace snf
