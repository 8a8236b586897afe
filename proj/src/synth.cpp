#include "snf/synth.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snf/errors.hpp"
#include "snf/params.hpp"

namespace snf {

namespace {

Date trading_day(std::size_t k) {
  // Weekdays only, starting on Monday 2021-01-04.
  const auto start = std::chrono::sys_days(std::chrono::year(2021) / 1 / 4);
  const auto weeks = static_cast<int>(k / 5);
  const auto rest = static_cast<int>(k % 5);
  return Date(start + std::chrono::days(7 * weeks + rest));
}

std::vector<double> unit_direction(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = g(rng);
    norm += x * x;
  }
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

}  // namespace

void write_market_dataset(const std::filesystem::path& dir, const MarketOptions& o) {
  if (o.stocks == 0 || o.days < 10 || o.dim < 2) throw ContractError("market dataset needs stocks, days >= 10, dim >= 2");
  auto rng = substream(o.seed, "synth/market");
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Common shock m[t]; stock t+1 moves by beta_s·m[t+1].
  std::vector<double> shock(o.days + 1);
  for (double& m : shock) m = g(rng);

  std::vector<StockContext> names;
  for (std::size_t s = 0; s < o.stocks; ++s) {
    const std::string id = fmt::format("S{:02d}", s + 1);
    const double beta = 0.8 + 0.4 * static_cast<double>(s) / static_cast<double>(std::max<std::size_t>(1, o.stocks - 1));
    PriceSeries series{id, {}};
    double x = 0.0;
    for (std::size_t t = 0; t < o.days; ++t) {
      x = o.phi * x + beta * shock[t] + o.idio * g(rng);
      series.points.push_back({trading_day(t), o.level + o.scale * x});
      if (series.points.back().close <= 0.0) throw ContractError("synthetic price went non-positive");
    }
    write_prices(dir / id / "prices.csv", series);
    StockContext ctx{id, fmt::format("Synthetic {}", id), {}};
    for (std::size_t j = 0; j < o.dim; ++j) ctx.name_embedding.push_back(0.5 * g(rng));
    names.push_back(std::move(ctx));
  }
  write_names(dir / "names.tsv", names);

  const auto signal_center = unit_direction(rng, o.dim);
  const auto noise_center = unit_direction(rng, o.dim);
  const auto signal_axis = unit_direction(rng, o.dim);
  const auto noise_axis = unit_direction(rng, o.dim);
  std::uniform_int_distribution<std::size_t> n_signal(1, std::max<std::size_t>(1, o.max_signal_articles));
  std::uniform_int_distribution<std::size_t> n_noise(0, o.max_noise_articles);
  for (std::size_t t = 0; t < o.days; ++t) {
    DailyNewsBatch day{trading_day(t), 0, o.dim, {}};
    if (u(rng) >= o.empty_day_rate) {
      const std::size_t ns = n_signal(rng), nn = n_noise(rng);
      for (std::size_t a = 0; a < ns; ++a) {
        for (std::size_t j = 0; j < o.dim; ++j) {
          day.values.push_back(2.0 * signal_center[j] + shock[t + 1] * signal_axis[j] + o.article_noise * g(rng));
        }
      }
      for (std::size_t a = 0; a < nn; ++a) {
        const double z = g(rng);
        for (std::size_t j = 0; j < o.dim; ++j) {
          day.values.push_back(2.0 * noise_center[j] + z * noise_axis[j] + o.article_noise * g(rng));
        }
      }
      day.count = ns + nn;
    }
    write_news_day(dir / "news" / (format_date(day.date) + ".emb"), day);
  }
}

Dataset trend_dataset(std::size_t samples, std::size_t window, std::size_t horizon, std::size_t dim) {
  if (samples == 0) throw ContractError("trend_dataset: need at least one sample");
  const std::size_t days = samples + window + horizon - 1;
  std::vector<double> closes(days);
  std::vector<Date> dates(days);
  for (std::size_t i = 0; i < days; ++i) {
    closes[i] = 100.0 + static_cast<double>(i);
    dates[i] = trading_day(i);
  }
  Dataset ds;
  ds.window = window;
  ds.horizon = horizon;
  ds.dim = dim;
  ds.news_scaler = FeatureScaler::identity(dim);
  StockContext ctx{"TREND", "Linear trend", std::vector<double>(dim, 0.0)};
  for (std::size_t j = 0; j < dim; ++j) ctx.name_embedding[j] = j % 2 == 0 ? 0.5 : -0.5;
  ds.stocks.push_back(ctx);

  StockSummary summary;
  summary.stock_id = ctx.stock_id;
  summary.days = days;
  summary.splits.train = {0, days};
  summary.splits.val = {days, days};
  summary.splits.test = {days, days};
  summary.price_scaler = fit_scaler(closes);
  std::vector<double> z(days);
  for (std::size_t i = 0; i < days; ++i) z[i] = summary.price_scaler.transform(closes[i]);
  std::vector<std::size_t> no_news(days, kNoNews);
  ds.train = build_windows(z, dates, no_news, ctx.stock_id, 0, window, horizon, summary.splits);
  summary.train_samples = ds.train.size();
  ds.summaries.push_back(summary);
  ds.val = ds.train;
  for (auto& s : ds.val) s.split = Split::val;
  ds.test = ds.val;
  for (auto& s : ds.test) s.split = Split::test;
  return ds;
}

}  // namespace snf
