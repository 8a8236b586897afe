#include "snf/pooling.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snf/errors.hpp"

namespace snf {

std::optional<PoolingVariant> parse_pooling(std::string_view name) {
  if (name == "none") return PoolingVariant::none;
  if (name == "ap") return PoolingVariant::ap;
  if (name == "cap") return PoolingVariant::cap;
  if (name == "sap") return PoolingVariant::sap;
  if (name == "pasap") return PoolingVariant::pasap;
  return std::nullopt;
}

const char* pooling_name(PoolingVariant variant) {
  switch (variant) {
    case PoolingVariant::none: return "none";
    case PoolingVariant::ap: return "ap";
    case PoolingVariant::cap: return "cap";
    case PoolingVariant::sap: return "sap";
    case PoolingVariant::pasap: return "pasap";
  }
  return "?";
}

bool uses_name(PoolingVariant variant) {
  return variant == PoolingVariant::cap || variant == PoolingVariant::sap ||
         variant == PoolingVariant::pasap;
}

PositionalTable::PositionalTable(std::size_t max_len, std::size_t dim)
    : max_len_(max_len), dim_(dim), table_({max_len, dim}) {
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t j = 0; j < dim; ++j) {
      const std::size_t even = j - (j % 2);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(even) / static_cast<double>(dim));
      table_(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
}

Tensor PositionalTable::rows(std::size_t n) const {
  if (n > max_len_) {
    throw ContractError(fmt::format("positional table holds {} positions, {} requested", max_len_, n));
  }
  if (n == 0) return {};
  const auto src = table_.data();
  return Tensor({n, dim_}, std::vector<double>(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n * dim_)));
}

namespace {

void check_row(const char* op, const Var& v, std::size_t d) {
  if (v.rows() != 1 || v.cols() != d) {
    throw DimensionError(fmt::format("{}: expected 1x{} vector, got {}", op, d, shape_string(v.value().shape())));
  }
}

PoolResult attend(const Var& query, const Var& rows) {
  Var weights = ops::softmax_rows(ops::matmul(query, ops::transpose(rows)));
  return {ops::weighted_rows(weights, rows), weights, false};
}

PoolResult degenerate_zero(std::size_t d) { return {Var::constant(Tensor({1, d})), Var(), true}; }

}  // namespace

PoolResult pool_ap(const Var& news, const Var& w) {
  const std::size_t d = w.cols();
  if (!news) return degenerate_zero(d);
  check_row("pool_ap w", w, news.cols());
  return attend(w, news);
}

PoolResult pool_cap(const Var& news, const Var& name, const Var& w_c) {
  const std::size_t d = name.cols();
  if (w_c.rows() != d || w_c.cols() != d) {
    throw DimensionError(fmt::format("pool_cap: W_c must be {}x{}, got {}", d, d, shape_string(w_c.value().shape())));
  }
  if (!news) return degenerate_zero(d);
  check_row("pool_cap e", name, news.cols());
  return attend(ops::matmul(name, w_c), news);
}

PoolResult pool_sap(const Var& news, const Var& name, const Var& w_s) {
  check_row("pool_sap w_s", w_s, name.cols());
  if (!news) {
    // Single-row softmax: the name alone carries weight 1.
    Var weights = ops::softmax_rows(ops::matmul(w_s, ops::transpose(name)));
    return {ops::weighted_rows(weights, name), weights, false};
  }
  check_row("pool_sap e", name, news.cols());
  const Var parts[] = {name, news};
  return attend(w_s, ops::concat_rows(parts));
}

PoolResult pool_pasap(const Var& news, const Var& name, const Var& w_p, const PositionalTable& table) {
  const std::size_t d = w_p.cols();
  if (!news) return degenerate_zero(d);
  check_row("pool_pasap e", name, news.cols());
  check_row("pool_pasap w_p", w_p, news.cols());
  const std::size_t n = news.rows();
  if (table.dim() != d) {
    throw DimensionError(fmt::format("pool_pasap: positional table has d={}, news has d={}", table.dim(), d));
  }
  Var shifted = ops::add_row(ops::add(news, Var::constant(table.rows(n))), name);
  return attend(w_p, shifted);
}

std::string pooling_param_id(PoolingVariant variant) {
  switch (variant) {
    case PoolingVariant::none: return {};
    case PoolingVariant::ap: return "pool.w";
    case PoolingVariant::cap: return "pool.Wc";
    case PoolingVariant::sap: return "pool.ws";
    case PoolingVariant::pasap: return "pool.wp";
  }
  return {};
}

void init_pooling(ParamSet& params, PoolingVariant variant, std::size_t dim, std::uint64_t seed) {
  const std::string id = pooling_param_id(variant);
  if (id.empty()) return;
  if (variant == PoolingVariant::cap) {
    Tensor w = gaussian(seed, id, {dim, dim}, 0.02);
    for (std::size_t i = 0; i < dim; ++i) w(i, i) += 1.0;
    params.add(id, std::move(w));
    return;
  }
  params.add(id, gaussian(seed, id, {1, dim}, std::sqrt(1.0 / static_cast<double>(dim))));
}

PoolResult pool_day(PoolingVariant variant, const ParamSet& params, const Var& news, const Var& name,
                    const PositionalTable& table) {
  switch (variant) {
    case PoolingVariant::none: throw ContractError("pool_day: pooling is disabled");
    case PoolingVariant::ap: return pool_ap(news, params.at("pool.w"));
    case PoolingVariant::cap: return pool_cap(news, name, params.at("pool.Wc"));
    case PoolingVariant::sap: return pool_sap(news, name, params.at("pool.ws"));
    case PoolingVariant::pasap: return pool_pasap(news, name, params.at("pool.wp"), table);
  }
  throw ContractError("pool_day: unknown variant");
}

}  // namespace snf
