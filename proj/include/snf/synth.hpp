#pragma once

// Seeded synthetic data for tests, demos and the news-signal experiment.

#include <cstdint>
#include <filesystem>

#include "snf/dataset.hpp"

namespace snf {

/// Stocks follow x[t+1] = phi·x[t] + beta_s·m[t+1] + idio noise around a
/// positive level, with m a common market shock. Each day carries articles
/// from two clusters: "signal" articles whose content encodes the NEXT
/// day's shock m[t+1], and "noise" articles with independent content.
struct MarketOptions {
  std::size_t stocks = 3;
  std::size_t days = 300;
  std::size_t dim = 8;
  std::uint64_t seed = 7;
  double phi = 0.5;
  double idio = 0.2;
  double level = 100.0;
  double scale = 5.0;
  std::size_t max_signal_articles = 2;
  std::size_t max_noise_articles = 3;
  double article_noise = 0.1;
  /// Probability that a trading day has no articles at all.
  double empty_day_rate = 0.0;
};

/// Writes names.tsv, <stock>/prices.csv and news/<date>.emb under `dir`.
void write_market_dataset(const std::filesystem::path& dir, const MarketOptions& options);

/// Single-stock linear price trend with no news, as an in-memory dataset:
/// `samples` train windows; validation reuses the same windows so early
/// stopping tracks the fit itself.
Dataset trend_dataset(std::size_t samples, std::size_t window, std::size_t horizon, std::size_t dim);

}  // namespace snf
