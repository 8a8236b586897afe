#include "snf/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snf/errors.hpp"

namespace snf {

namespace {
constexpr double kRevinEps = 1e-5;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  if (config_.dim == 0) throw ContractError("model: embedding dimension must be positive");
  if (config_.window == 0 || config_.horizon == 0) throw ContractError("model: T and H must be positive");
  const bool news = config_.pooling != PoolingVariant::none;
  init_pooling(params_, config_.pooling, config_.dim, config_.seed);
  init_fusion(params_, config_.dim, config_.seed, news, config_.flags);
  init_backbone(params_, config_.backbone, config_.dim, config_.window, config_.horizon, config_.snp, config_.seed,
                config_.vocab_file);
  if (config_.pooling == PoolingVariant::pasap) positions_ = PositionalTable(config_.positional_len, config_.dim);
}

void Model::set_contexts(const std::vector<StockContext>& stocks) {
  contexts_.clear();
  for (const auto& s : stocks) set_context(s.stock_id, Tensor::row(s.name_embedding));
}

void Model::set_context(const std::string& stock_id, Tensor name) {
  if (name.rank() != 2 || name.rows() != 1 || name.cols() != config_.dim) {
    throw DimensionError(fmt::format("context '{}' must be 1x{}, got {}", stock_id, config_.dim,
                                     shape_string(name.shape())));
  }
  contexts_[stock_id] = std::move(name);
}

SampleInput Model::input(const Dataset& dataset, const WindowSample& sample) const {
  auto it = contexts_.find(sample.stock_id);
  if (it == contexts_.end()) {
    throw ContractError("stock '" + sample.stock_id + "' has no context entry in this model");
  }
  SampleInput in;
  in.closes = Tensor({sample.window.size(), 1}, sample.window);
  in.name = it->second;
  in.target = sample.target;
  in.news.resize(sample.window.size());
  for (std::size_t t = 0; t < sample.window.size(); ++t) {
    const DailyNewsBatch* day = dataset.news_for(sample, t);
    if (day && !day->empty()) in.news[t] = day->matrix();
  }
  return in;
}

ForwardTrace Model::trace(const SampleInput& in) const {
  if (in.closes.rows() != config_.window || in.closes.cols() != 1) {
    throw DimensionError(fmt::format("model expects {}x1 closes, got {}", config_.window,
                                     shape_string(in.closes.shape())));
  }
  ForwardTrace tr;
  Var name = Var::constant(in.name);
  if (config_.pooling != PoolingVariant::none) {
    if (in.news.size() != config_.window) throw DimensionError("news slots do not match the window length");
    std::vector<Var> rows;
    rows.reserve(config_.window);
    for (const auto& day : in.news) {
      Var b = day ? Var::constant(*day) : Var();
      tr.days.push_back(pool_day(config_.pooling, params_, b, name, positions_));
      rows.push_back(tr.days.back().pooled);
    }
    tr.pooled = ops::concat_rows(rows);
  }
  Tensor closes = in.closes;
  double mean = 0.0, stddev = 1.0;
  if (config_.revin) {
    const auto x = in.closes.data();
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    stddev = std::sqrt(var / static_cast<double>(x.size()) + kRevinEps);
    for (double& v : closes.data()) v = (v - mean) / stddev;
  }
  tr.fusion = fuse(params_, tr.pooled, Var::constant(closes), config_.flags);
  Var out = forward_backbone(params_, config_.backbone, tr.fusion.features, name, config_.snp);
  if (config_.revin) {
    out = ops::add_row(ops::scale(out, stddev), Var::constant(Tensor({1, out.cols()}, mean)));
  }
  tr.prediction = out;
  return tr;
}

std::vector<double> Model::predict(const SampleInput& in) const {
  Var p = forward(in);
  const auto d = p.value().data();
  return {d.begin(), d.end()};
}

}  // namespace snf
