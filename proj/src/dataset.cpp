#include "snf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "snf/errors.hpp"

namespace snf {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_view(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      break;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

// Lines without their terminator; a trailing CR is tolerated.
std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split_view(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  return lines;
}

bool valid_stock_id(std::string_view id) {
  return !id.empty() && id != "." && id != ".." &&
         std::all_of(id.begin(), id.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
         });
}

std::string join_doubles(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

}  // namespace

Tensor DailyNewsBatch::matrix() const {
  if (count == 0) throw ContractError("news day " + format_date(date) + " has no articles");
  return Tensor({count, dim}, values);
}

// --------------------------------------------------------------------------

PriceSeries load_prices(const fs::path& path, std::string stock_id) {
  const std::string text = read_file(path);
  const auto lines = lines_of(text);
  const std::string where = path.string();
  if (lines.empty() || lines[0] != "date,close") {
    throw FormatError(where + ":1: expected header 'date,close'");
  }
  PriceSeries series;
  series.stock_id = std::move(stock_id);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = split_view(lines[i], ',');
    if (fields.size() != 2) {
      throw FormatError(fmt::format("{}:{}: expected 2 fields, got {}", where, lineno, fields.size()));
    }
    const auto date = parse_date(fields[0]);
    if (!date) throw FormatError(fmt::format("{}:{}: invalid date '{}'", where, lineno, fields[0]));
    const auto close = parse_double(fields[1]);
    if (!close) throw FormatError(fmt::format("{}:{}: invalid close '{}'", where, lineno, fields[1]));
    if (!std::isfinite(*close) || *close <= 0.0) {
      throw ValueError(fmt::format("{}:{}: close must be finite and positive, got {}", where, lineno,
                                   fields[1]));
    }
    if (!series.points.empty()) {
      const Date prev = series.points.back().date;
      if (*date == prev) {
        throw FormatError(fmt::format("{}:{}: duplicate date {}", where, lineno, format_date(*date)));
      }
      if (*date < prev) {
        throw FormatError(fmt::format("{}:{}: date {} is not after {}", where, lineno,
                                      format_date(*date), format_date(prev)));
      }
    }
    series.points.push_back({*date, *close});
  }
  if (series.points.empty()) throw FormatError(where + ": no price rows");
  return series;
}

void write_prices(const fs::path& path, const PriceSeries& series) {
  std::string out = "date,close\n";
  for (const auto& p : series.points) out += format_date(p.date) + "," + format_double(p.close) + "\n";
  write_file(path, out);
}

DailyNewsBatch parse_news_day(std::string_view bytes, const std::string& origin) {
  ByteReader in(bytes);
  if (in.take(kNewsMagic.size()) != kNewsMagic || !in.ok()) {
    throw FormatError(origin + ": bad magic, expected NEWSEMB1");
  }
  const std::uint32_t n = in.u32();
  const std::uint32_t d = in.u32();
  if (!in.ok()) throw FormatError(origin + ": truncated header");
  if (d == 0) throw FormatError(origin + ": embedding dimension must be positive");
  const std::uint64_t expected = static_cast<std::uint64_t>(n) * d * 4;
  if (in.remaining() < expected) {
    throw FormatError(fmt::format("{}: truncated payload, need {} bytes after offset {}, have {}",
                                  origin, expected, in.offset(), in.remaining()));
  }
  if (in.remaining() > expected) {
    throw FormatError(fmt::format("{}: {} trailing bytes after payload", origin, in.remaining() - expected));
  }
  DailyNewsBatch batch;
  batch.count = n;
  batch.dim = d;
  batch.values.resize(static_cast<std::size_t>(n) * d);
  for (std::size_t i = 0; i < batch.values.size(); ++i) {
    const std::size_t offset = in.offset();
    const float v = in.f32();
    if (!std::isfinite(v)) {
      throw FormatError(fmt::format("{}: non-finite value at byte offset {}", origin, offset));
    }
    batch.values[i] = static_cast<double>(v);
  }
  return batch;
}

DailyNewsBatch load_news_day(const fs::path& path) {
  const auto date = parse_date(path.stem().string());
  if (!date) throw FormatError(path.string() + ": file name is not YYYY-MM-DD.emb");
  DailyNewsBatch batch = parse_news_day(read_file(path), path.string());
  batch.date = *date;
  return batch;
}

std::string encode_news_day(const DailyNewsBatch& batch) {
  std::string out(kNewsMagic);
  put_u32(out, static_cast<std::uint32_t>(batch.count));
  put_u32(out, static_cast<std::uint32_t>(batch.dim));
  for (double v : batch.values) put_f32(out, static_cast<float>(v));
  return out;
}

void write_news_day(const fs::path& path, const DailyNewsBatch& batch) {
  write_file(path, encode_news_day(batch));
}

std::vector<StockContext> load_names(const fs::path& path) {
  const std::string text = read_file(path);
  const std::string where = path.string();
  std::vector<StockContext> out;
  std::set<std::string> seen;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = split_view(lines[i], '\t');
    if (fields.size() != 3) {
      throw FormatError(fmt::format("{}:{}: expected 3 tab-separated fields, got {}", where, lineno,
                                    fields.size()));
    }
    StockContext ctx{std::string(fields[0]), std::string(fields[1]), {}};
    if (!valid_stock_id(ctx.stock_id)) {
      throw FormatError(fmt::format("{}:{}: invalid stock id '{}'", where, lineno, ctx.stock_id));
    }
    if (!seen.insert(ctx.stock_id).second) {
      throw FormatError(fmt::format("{}:{}: duplicate stock id '{}'", where, lineno, ctx.stock_id));
    }
    for (auto tok : split_view(fields[2], ',')) {
      const auto v = parse_double(tok);
      if (!v || !std::isfinite(*v)) {
        throw FormatError(fmt::format("{}:{}: invalid embedding value '{}'", where, lineno, tok));
      }
      ctx.name_embedding.push_back(*v);
    }
    if (!out.empty() && ctx.name_embedding.size() != out.front().name_embedding.size()) {
      throw FormatError(fmt::format("{}:{}: embedding has {} values, expected {}", where, lineno,
                                    ctx.name_embedding.size(), out.front().name_embedding.size()));
    }
    out.push_back(std::move(ctx));
  }
  if (out.empty()) throw FormatError(where + ": no stocks listed");
  return out;
}

void write_names(const fs::path& path, std::span<const StockContext> contexts) {
  std::string out;
  for (const auto& c : contexts) {
    out += c.stock_id + "\t" + c.display_name + "\t" + join_doubles(c.name_embedding) + "\n";
  }
  write_file(path, out);
}

// --------------------------------------------------------------------------

Scaler fit_scaler(std::span<const double> values, Modality modality) {
  if (values.empty()) throw ContractError("fit_scaler: empty span");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  Scaler s;
  s.mean = mean;
  s.stddev = std::sqrt(ss / n);
  s.constant = s.stddev <= 1e-12 * std::max(1.0, std::fabs(mean));
  s.modality = modality;
  return s;
}

FeatureScaler FeatureScaler::identity(std::size_t dim) {
  FeatureScaler f;
  f.dims.assign(dim, Scaler{0.0, 1.0, false, Modality::news});
  return f;
}

void FeatureScaler::transform_rows(std::span<double> row_major) const {
  const std::size_t d = dims.size();
  for (std::size_t i = 0; i < row_major.size(); ++i) row_major[i] = dims[i % d].transform(row_major[i]);
}

// --------------------------------------------------------------------------

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const DayRange& SplitRanges::range(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return test;
}

SplitRanges split_indices(std::size_t total_days) {
  const std::size_t train = (7 * total_days) / 10;
  const std::size_t test = (2 * total_days) / 10;
  if (train == 0 || test == 0 || total_days <= train + test) {
    throw ContractError(fmt::format("split_indices: {} days cannot fill train/val/test", total_days));
  }
  SplitRanges r;
  r.train = {0, train};
  r.val = {train, total_days - test};
  r.test = {total_days - test, total_days};
  return r;
}

std::vector<WindowSample> build_windows(std::span<const double> closes, std::span<const Date> dates,
                                        std::span<const std::size_t> news_index,
                                        const std::string& stock_id, std::size_t stock_index,
                                        std::size_t window, std::size_t horizon,
                                        const SplitRanges& splits, WindowReport* report) {
  if (closes.size() != dates.size() || closes.size() != news_index.size()) {
    throw DimensionError("build_windows: closes, dates and news index lengths differ");
  }
  if (window == 0 || horizon == 0) throw ContractError("build_windows: T and H must be positive");
  std::vector<WindowSample> out;
  WindowReport local;
  const std::size_t span = window + horizon;
  for (std::size_t s = 0; s + span <= closes.size(); ++s) {
    const std::size_t last = s + span - 1;
    std::optional<Split> owner;
    for (Split sp : {Split::train, Split::val, Split::test}) {
      if (splits.range(sp).contains(s) && splits.range(sp).contains(last)) owner = sp;
    }
    if (!owner) {
      ++local.skipped_cross_split;
      continue;
    }
    WindowSample w;
    w.stock_id = stock_id;
    w.stock_index = stock_index;
    w.split = *owner;
    w.window.assign(closes.begin() + static_cast<std::ptrdiff_t>(s),
                    closes.begin() + static_cast<std::ptrdiff_t>(s + window));
    w.news.assign(news_index.begin() + static_cast<std::ptrdiff_t>(s),
                  news_index.begin() + static_cast<std::ptrdiff_t>(s + window));
    w.window_dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(s),
                          dates.begin() + static_cast<std::ptrdiff_t>(s + window));
    w.target.assign(closes.begin() + static_cast<std::ptrdiff_t>(s + window),
                    closes.begin() + static_cast<std::ptrdiff_t>(s + span));
    w.target_dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(s + window),
                          dates.begin() + static_cast<std::ptrdiff_t>(s + span));
    out.push_back(std::move(w));
    ++local.accepted;
  }
  if (report) {
    report->accepted += local.accepted;
    report->skipped_cross_split += local.skipped_cross_split;
  }
  return out;
}

// --------------------------------------------------------------------------

const std::vector<WindowSample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return test;
}

std::optional<std::size_t> Dataset::stock_index(const std::string& stock_id) const {
  for (std::size_t i = 0; i < stocks.size(); ++i)
    if (stocks[i].stock_id == stock_id) return i;
  return std::nullopt;
}

const DailyNewsBatch* Dataset::news_for(const WindowSample& sample, std::size_t t) const {
  const std::size_t idx = sample.news.at(t);
  return idx == kNoNews ? nullptr : &news_days.at(idx);
}

std::string Manifest::serialize() const {
  std::string out = "# snfuse dataset manifest\n";
  for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
  return out;
}

Manifest Manifest::parse(std::string_view text) {
  Manifest m;
  std::size_t lineno = 0;
  for (auto line : lines_of(text)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw FormatError(fmt::format("manifest:{}: expected key=value", lineno));
    }
    m.entries[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  return m;
}

const std::string& Manifest::at(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) throw FormatError("manifest: missing key '" + key + "'");
  return it->second;
}

PreparedDataset prepare_dataset(const fs::path& data_dir, const DatasetOptions& options) {
  if (options.window == 0 || options.horizon == 0) {
    throw ContractError("prepare_dataset: window and horizon must be positive");
  }
  const fs::path names_path = data_dir / "names.tsv";
  if (!fs::exists(names_path)) throw FormatError("missing names.tsv: " + names_path.string());
  const fs::path news_dir = data_dir / "news";
  if (!fs::is_directory(news_dir)) throw FormatError("missing news directory: " + news_dir.string());

  PreparedDataset out;
  Dataset& ds = out.dataset;
  auto& entries = out.manifest.entries;
  ds.window = options.window;
  ds.horizon = options.horizon;
  ds.news_enabled = options.use_news;
  ds.stocks = load_names(names_path);
  ds.dim = ds.stocks.front().name_embedding.size();
  if (ds.dim == 0) throw FormatError(names_path.string() + ": empty name embeddings");

  entries["format"] = "snf-dataset-manifest/1";
  entries["window"] = std::to_string(ds.window);
  entries["horizon"] = std::to_string(ds.horizon);
  entries["dim"] = std::to_string(ds.dim);
  entries["file.names.tsv"] = sha256_file(names_path);

  // Prices, splits and price scalers per stock.
  std::vector<PriceSeries> series;
  std::vector<std::string> ids;
  for (const auto& ctx : ds.stocks) {
    const fs::path p = data_dir / ctx.stock_id / "prices.csv";
    if (!fs::exists(p)) throw FormatError("missing price file: " + p.string());
    series.push_back(load_prices(p, ctx.stock_id));
    entries["file." + ctx.stock_id + "/prices.csv"] = sha256_file(p);
    ids.push_back(ctx.stock_id);
  }
  entries["stocks"] = fmt::format("{}", fmt::join(ids, ","));

  std::set<Date> calendar;
  std::set<Date> train_dates;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& pts = series[s].points;
    StockSummary summary;
    summary.stock_id = ids[s];
    summary.days = pts.size();
    summary.splits = split_indices(pts.size());
    std::vector<double> train_closes;
    for (std::size_t i = summary.splits.train.begin; i < summary.splits.train.end; ++i) {
      train_closes.push_back(pts[i].close);
      train_dates.insert(pts[i].date);
    }
    summary.price_scaler = fit_scaler(train_closes, Modality::price);
    for (const auto& p : pts) calendar.insert(p.date);
    ds.summaries.push_back(summary);
  }

  // News: every file is validated and hashed; only trading days are kept.
  std::vector<fs::path> news_files;
  for (const auto& entry : fs::directory_iterator(news_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".emb") news_files.push_back(entry.path());
  }
  std::sort(news_files.begin(), news_files.end());
  std::vector<double> train_articles;
  std::size_t train_article_count = 0;
  for (const auto& p : news_files) {
    DailyNewsBatch batch = load_news_day(p);
    if (batch.dim != ds.dim) {
      throw FormatError(fmt::format("{}: embedding dimension {} differs from names.tsv ({})", p.string(),
                                    batch.dim, ds.dim));
    }
    entries["file.news/" + p.filename().string()] = sha256_file(p);
    if (!calendar.contains(batch.date)) {
      ++ds.unaligned_news_days;
      continue;
    }
    if (train_dates.contains(batch.date)) {
      train_articles.insert(train_articles.end(), batch.values.begin(), batch.values.end());
      train_article_count += batch.count;
    }
    ds.news_days.push_back(std::move(batch));
  }

  // Per-dimension news scaler over every training-span article.
  if (train_article_count == 0) {
    ds.news_scaler = FeatureScaler::identity(ds.dim);
  } else {
    std::vector<double> column(train_article_count);
    for (std::size_t j = 0; j < ds.dim; ++j) {
      for (std::size_t i = 0; i < train_article_count; ++i) column[i] = train_articles[i * ds.dim + j];
      ds.news_scaler.dims.push_back(fit_scaler(column, Modality::news));
    }
  }
  for (auto& day : ds.news_days) ds.news_scaler.transform_rows(day.values);

  if (options.use_news) {
    for (auto& ctx : ds.stocks) ds.news_scaler.transform_rows(ctx.name_embedding);
  }

  std::vector<double> means, stds, consts;
  for (const auto& s : ds.news_scaler.dims) {
    means.push_back(s.mean);
    stds.push_back(s.stddev);
    consts.push_back(s.constant ? 1.0 : 0.0);
  }
  entries["news.days"] = std::to_string(ds.news_days.size());
  entries["news.unaligned_days"] = std::to_string(ds.unaligned_news_days);
  entries["news.train_articles"] = std::to_string(train_article_count);
  entries["news.scaler.mean"] = join_doubles(means);
  entries["news.scaler.std"] = join_doubles(stds);
  entries["news.scaler.constant"] = join_doubles(consts);

  std::map<Date, std::size_t> news_by_date;
  for (std::size_t i = 0; i < ds.news_days.size(); ++i) news_by_date[ds.news_days[i].date] = i;

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& pts = series[s].points;
    StockSummary& summary = ds.summaries[s];
    std::vector<double> closes;
    std::vector<Date> dates;
    std::vector<std::size_t> news_idx;
    for (const auto& p : pts) {
      closes.push_back(summary.price_scaler.transform(p.close));
      dates.push_back(p.date);
      auto it = news_by_date.find(p.date);
      news_idx.push_back(options.use_news && it != news_by_date.end() ? it->second : kNoNews);
    }
    WindowReport report;
    auto samples = build_windows(closes, dates, news_idx, summary.stock_id, s, ds.window, ds.horizon,
                                 summary.splits, &report);
    summary.skipped = report.skipped_cross_split;
    for (auto& w : samples) {
      switch (w.split) {
        case Split::train: ++summary.train_samples; ds.train.push_back(std::move(w)); break;
        case Split::val: ++summary.val_samples; ds.val.push_back(std::move(w)); break;
        case Split::test: ++summary.test_samples; ds.test.push_back(std::move(w)); break;
      }
    }
    const std::string key = "stock." + summary.stock_id;
    entries[key + ".days"] = std::to_string(summary.days);
    entries[key + ".split"] = fmt::format("{},{},{}", summary.splits.train.size(),
                                          summary.splits.val.size(), summary.splits.test.size());
    entries[key + ".split_start"] =
        fmt::format("{},{},{}", format_date(pts[summary.splits.train.begin].date),
                    format_date(pts[summary.splits.val.begin].date),
                    format_date(pts[summary.splits.test.begin].date));
    entries[key + ".price_scaler"] =
        fmt::format("{},{},{}", format_double(summary.price_scaler.mean),
                    format_double(summary.price_scaler.stddev), summary.price_scaler.constant ? 1 : 0);
    entries[key + ".samples"] =
        fmt::format("{},{},{}", summary.train_samples, summary.val_samples, summary.test_samples);
    entries[key + ".skipped"] = std::to_string(summary.skipped);
  }
  return out;
}

Dataset load_dataset(const fs::path& data_dir, const Manifest& manifest, const DatasetOptions& options) {
  if (manifest.at("window") != std::to_string(options.window) ||
      manifest.at("horizon") != std::to_string(options.horizon)) {
    throw FormatError(fmt::format("manifest was prepared for T={} H={}, config asks T={} H={}",
                                  manifest.at("window"), manifest.at("horizon"), options.window,
                                  options.horizon));
  }
  PreparedDataset fresh = prepare_dataset(data_dir, options);
  for (const auto& [key, value] : manifest.entries) {
    auto it = fresh.manifest.entries.find(key);
    if (it == fresh.manifest.entries.end()) {
      throw FormatError("dataset drift: '" + key + "' recorded in manifest but absent from data");
    }
    if (it->second != value) {
      throw FormatError("dataset drift at '" + key + "': manifest has " + value + ", data gives " + it->second);
    }
  }
  for (const auto& [key, _] : fresh.manifest.entries) {
    if (!manifest.entries.contains(key)) throw FormatError("dataset drift: new entry '" + key + "'");
  }
  return std::move(fresh.dataset);
}

}  // namespace snf
