#pragma once

// Ingestion, scaling, windowing and splitting of multi-stock price series
// with daily news-embedding collections.
//
// On-disk layout of a data directory:
//   names.tsv                 stock_id<TAB>display_name<TAB>comma-separated floats
//   <stock_id>/prices.csv     header "date,close"
//   news/<YYYY-MM-DD>.emb     NEWSEMB1 binary (see write_news_day)

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snf/io.hpp"
#include "snf/tensor.hpp"

namespace snf {

struct PricePoint {
  Date date;
  double close = 0.0;
};

struct PriceSeries {
  std::string stock_id;
  std::vector<PricePoint> points;
};

/// One trading day's articles: `count` rows of `dim` values, row-major.
struct DailyNewsBatch {
  Date date;
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  bool empty() const noexcept { return count == 0; }
  /// count×dim tensor; throws ContractError when the day has no articles.
  Tensor matrix() const;
};

struct StockContext {
  std::string stock_id;
  std::string display_name;
  std::vector<double> name_embedding;
};

PriceSeries load_prices(const std::filesystem::path& path, std::string stock_id = {});
void write_prices(const std::filesystem::path& path, const PriceSeries& series);

inline constexpr std::string_view kNewsMagic = "NEWSEMB1";

DailyNewsBatch parse_news_day(std::string_view bytes, const std::string& origin = "<memory>");
DailyNewsBatch load_news_day(const std::filesystem::path& path);
/// Serialises rows as float32; `dim` is written even when count == 0.
std::string encode_news_day(const DailyNewsBatch& batch);
void write_news_day(const std::filesystem::path& path, const DailyNewsBatch& batch);

std::vector<StockContext> load_names(const std::filesystem::path& path);
void write_names(const std::filesystem::path& path, std::span<const StockContext> contexts);

// --------------------------------------------------------------------------

enum class Modality { price, news };

/// Standard scaler with population variance.
struct Scaler {
  double mean = 0.0;
  double stddev = 1.0;
  bool constant = false;  // std ~ 0: transform only subtracts the mean
  Modality modality = Modality::price;

  double transform(double x) const noexcept { return constant ? x - mean : (x - mean) / stddev; }
  double inverse(double z) const noexcept { return constant ? z + mean : z * stddev + mean; }
};

Scaler fit_scaler(std::span<const double> values, Modality modality = Modality::price);

/// Per-dimension scaler applied to embedding rows.
struct FeatureScaler {
  std::vector<Scaler> dims;

  static FeatureScaler identity(std::size_t dim);
  void transform_rows(std::span<double> row_major) const;
};

// --------------------------------------------------------------------------

struct DayRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
};

enum class Split { train, val, test };
const char* split_name(Split split);

struct SplitRanges {
  DayRange train, val, test;
  const DayRange& range(Split s) const;
};

/// Chronological 70/10/20 split: train = floor(0.7 N), test = floor(0.2 N),
/// val gets the rest. ContractError when any part would be empty.
SplitRanges split_indices(std::size_t total_days);

// --------------------------------------------------------------------------

inline constexpr std::size_t kNoNews = std::numeric_limits<std::size_t>::max();

struct WindowSample {
  std::string stock_id;
  std::size_t stock_index = 0;
  Split split = Split::train;
  std::vector<double> window;            // T normalized closes
  std::vector<std::size_t> news;         // T indices into Dataset::news_days (kNoNews = none)
  std::vector<double> target;            // H normalized closes
  std::vector<Date> window_dates;
  std::vector<Date> target_dates;
};

struct WindowReport {
  std::size_t accepted = 0;
  std::size_t skipped_cross_split = 0;
};

/// Windows whose T inputs and H targets all fall inside one split range.
/// Input position t covers days [s, s+T) and targets [s+T, s+T+H).
std::vector<WindowSample> build_windows(std::span<const double> normalized_closes,
                                        std::span<const Date> dates,
                                        std::span<const std::size_t> news_index,
                                        const std::string& stock_id, std::size_t stock_index,
                                        std::size_t window, std::size_t horizon,
                                        const SplitRanges& splits, WindowReport* report = nullptr);

// --------------------------------------------------------------------------

struct DatasetOptions {
  std::size_t window = 20;
  std::size_t horizon = 1;
  /// When false the pooled-news path is unplugged: samples never reference
  /// news and name embeddings stay raw.
  bool use_news = true;
};

struct StockSummary {
  std::string stock_id;
  std::size_t days = 0;
  SplitRanges splits;
  Scaler price_scaler;
  std::size_t train_samples = 0, val_samples = 0, test_samples = 0;
  std::size_t skipped = 0;
};

struct Dataset {
  std::size_t window = 20;
  std::size_t horizon = 1;
  std::size_t dim = 0;
  bool news_enabled = true;

  std::vector<StockContext> stocks;
  std::vector<DailyNewsBatch> news_days;  // scaled, ordered by date
  FeatureScaler news_scaler;
  std::vector<StockSummary> summaries;    // same order as stocks
  std::size_t unaligned_news_days = 0;

  std::vector<WindowSample> train, val, test;

  const std::vector<WindowSample>& split(Split s) const;
  std::optional<std::size_t> stock_index(const std::string& stock_id) const;
  const DailyNewsBatch* news_for(const WindowSample& sample, std::size_t t) const;
};

/// Text manifest: ordered `key=value` lines, no timestamps.
struct Manifest {
  std::map<std::string, std::string> entries;

  std::string serialize() const;
  static Manifest parse(std::string_view text);
  std::string hash() const { return sha256_hex(serialize()); }
  const std::string& at(const std::string& key) const;
};

struct PreparedDataset {
  Dataset dataset;
  Manifest manifest;
};

/// Loads, validates, scales, windows and splits a data directory.
PreparedDataset prepare_dataset(const std::filesystem::path& data_dir, const DatasetOptions& options);

/// Re-prepares `data_dir` and verifies that it reproduces `manifest` exactly
/// (file hashes, splits and scaler statistics bit for bit). FormatError on drift.
Dataset load_dataset(const std::filesystem::path& data_dir, const Manifest& manifest,
                     const DatasetOptions& options);

}  // namespace snf
