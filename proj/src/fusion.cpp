#include "snf/fusion.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snf/errors.hpp"

namespace snf {

const char* blend_term_name(BlendTerm term) {
  switch (term) {
    case BlendTerm::dense_news: return "denseN";
    case BlendTerm::dense_price: return "denseP";
    case BlendTerm::p2n: return "P2N";
    case BlendTerm::n2p: return "N2P";
    case BlendTerm::gcn: return "GCN";
  }
  return "?";
}

AttentionResult cross_att(const Var& q, const Var& k, const Var& v, const Var& wq, const Var& wk,
                          const Var& wv) {
  if (k.rows() != v.rows()) {
    throw ContractError(fmt::format("cross_att: K has {} rows but V has {}", k.rows(), v.rows()));
  }
  Var qp = ops::matmul(q, wq);
  Var kp = ops::matmul(k, wk);
  Var vp = ops::matmul(v, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(qp.cols()));
  Var weights = ops::softmax_rows(ops::scale(ops::matmul(qp, ops::transpose(kp)), scale));
  return {ops::matmul(weights, vp), weights};
}

Tensor gcn_adjacency(std::size_t days, bool with_edges) {
  const std::size_t n = 2 * days;
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  if (with_edges) {
    for (std::size_t t = 0; t < days; ++t) {
      a(t, days + t) = 1.0;
      a(days + t, t) = 1.0;
    }
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return a;
}

Var causal_conv(const Var& x, std::span<const Var> taps, const Var& bias) {
  if (taps.empty()) throw ContractError("causal_conv: no taps");
  Var out = ops::matmul(x, taps[0]);
  for (std::size_t k = 1; k < taps.size(); ++k) {
    if (k >= x.rows()) break;  // shifted input is entirely padding
    out = out + ops::matmul(ops::shift_rows_down(x, k), taps[k]);
  }
  return ops::add_row(out, bias);
}

Var gcn_fuse(const Var& news, const Var& prices, const GcnWeights& weights, const Tensor& adjacency) {
  if (news.rows() != prices.rows() || news.cols() != prices.cols()) {
    throw DimensionError(fmt::format("gcn_fuse: news {} vs prices {}", shape_string(news.value().shape()),
                                     shape_string(prices.value().shape())));
  }
  const std::size_t days = prices.rows();
  if (adjacency.rows() != 2 * days) throw DimensionError("gcn_fuse: adjacency does not match T");
  const Var nodes[] = {news, prices};
  Var x = ops::concat_rows(nodes);
  Var h = ops::relu(ops::add_row(ops::matmul(ops::matmul(Var::constant(adjacency), x), weights.w), weights.b));
  return causal_conv(ops::slice_rows(h, days, days), weights.taps, weights.conv_bias);
}

std::vector<std::size_t> active_terms(bool news, const FusionFlags& flags) {
  if (!news) return {static_cast<std::size_t>(BlendTerm::dense_price)};
  std::vector<std::size_t> out{static_cast<std::size_t>(BlendTerm::dense_news),
                               static_cast<std::size_t>(BlendTerm::dense_price)};
  if (flags.p2n) out.push_back(static_cast<std::size_t>(BlendTerm::p2n));
  if (flags.n2p) out.push_back(static_cast<std::size_t>(BlendTerm::n2p));
  if (flags.gcn) out.push_back(static_cast<std::size_t>(BlendTerm::gcn));
  return out;
}

BlendResult blend(std::span<const Var> terms, const Var& logits, std::span<const std::size_t> active) {
  if (active.empty()) throw ContractError("blend: every term is disabled, nothing to predict from");
  if (terms.size() != kBlendTerms) throw ContractError("blend: expected five term slots");
  BlendResult r;
  r.active.assign(active.begin(), active.end());
  for (std::size_t i : active) {
    if (!terms[i]) throw ContractError(fmt::format("blend: active term {} is missing", i));
  }
  if (active.size() == 1) {
    r.output = terms[active[0]];
    r.weights = Var::constant(Tensor::scalar(1.0));
    return r;
  }
  if (!logits || logits.cols() != active.size()) {
    throw DimensionError(fmt::format("blend: need {} logits", active.size()));
  }
  r.weights = ops::softmax_rows(logits);
  for (std::size_t j = 0; j < active.size(); ++j) {
    Var term = ops::mul_scalar(terms[active[j]], ops::element(r.weights, 0, j));
    r.output = j == 0 ? term : r.output + term;
  }
  return r;
}

namespace {

void add_dense(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
               std::uint64_t seed, bool bias = true) {
  const double sd = std::sqrt(1.0 / static_cast<double>(in));
  params.add(prefix + ".w", gaussian(seed, prefix + ".w", {in, out}, sd));
  if (bias) params.add(prefix + ".b", Tensor({1, out}));
}

Var dense(const ParamSet& params, const std::string& prefix, const Var& x) {
  return ops::add_row(ops::matmul(x, params.at(prefix + ".w")), params.at(prefix + ".b"));
}

}  // namespace

void init_fusion(ParamSet& params, std::size_t dim, std::uint64_t seed, bool news, const FusionFlags& flags) {
  add_dense(params, "fusion.price_lift", 1, dim, seed);
  add_dense(params, "fusion.price_dense", dim, dim, seed);
  if (news) {
    add_dense(params, "fusion.news_dense", dim, dim, seed);
    const double sd = std::sqrt(1.0 / static_cast<double>(dim));
    for (const char* dir : {"p2n", "n2p"}) {
      if ((std::string(dir) == "p2n" && !flags.p2n) || (std::string(dir) == "n2p" && !flags.n2p)) continue;
      for (const char* m : {"wq", "wk", "wv"}) {
        const std::string id = fmt::format("fusion.{}.{}", dir, m);
        params.add(id, gaussian(seed, id, {dim, dim}, sd));
      }
    }
    if (flags.gcn) {
      add_dense(params, "fusion.gcn", dim, dim, seed);
      const double tap_sd = std::sqrt(1.0 / static_cast<double>(kConvTaps * dim));
      for (std::size_t k = 0; k < kConvTaps; ++k) {
        const std::string id = fmt::format("fusion.conv.k{}", k);
        params.add(id, gaussian(seed, id, {dim, dim}, tap_sd));
      }
      params.add("fusion.conv.b", Tensor({1, dim}));
    }
  }
  const auto active = active_terms(news, flags);
  if (active.size() > 1) params.add("fusion.blend_logits", Tensor({1, active.size()}));
}

FusionResult fuse(const ParamSet& params, const Var& news, const Var& closes, const FusionFlags& flags) {
  if (closes.cols() != 1) throw DimensionError("fuse: closes must be T×1");
  const bool with_news = static_cast<bool>(news);
  if (with_news && news.rows() != closes.rows()) {
    throw DimensionError(fmt::format("fuse: {} news days vs {} price days", news.rows(), closes.rows()));
  }
  std::vector<Var> terms(kBlendTerms);
  Var price_embed = dense(params, "fusion.price_lift", closes);
  Var dense_p = dense(params, "fusion.price_dense", price_embed);
  terms[static_cast<std::size_t>(BlendTerm::dense_price)] = dense_p;
  if (with_news) {
    Var dense_n = dense(params, "fusion.news_dense", news);
    terms[static_cast<std::size_t>(BlendTerm::dense_news)] = dense_n;
    if (flags.p2n) {
      terms[static_cast<std::size_t>(BlendTerm::p2n)] =
          cross_att(dense_p, dense_n, dense_n, params.at("fusion.p2n.wq"), params.at("fusion.p2n.wk"),
                    params.at("fusion.p2n.wv"))
              .output;
    }
    if (flags.n2p) {
      terms[static_cast<std::size_t>(BlendTerm::n2p)] =
          cross_att(dense_n, dense_p, dense_p, params.at("fusion.n2p.wq"), params.at("fusion.n2p.wk"),
                    params.at("fusion.n2p.wv"))
              .output;
    }
    if (flags.gcn) {
      GcnWeights g;
      g.w = params.at("fusion.gcn.w");
      g.b = params.at("fusion.gcn.b");
      for (std::size_t k = 0; k < kConvTaps; ++k) g.taps[k] = params.at(fmt::format("fusion.conv.k{}", k));
      g.conv_bias = params.at("fusion.conv.b");
      terms[static_cast<std::size_t>(BlendTerm::gcn)] =
          gcn_fuse(dense_n, dense_p, g, gcn_adjacency(closes.rows()));
    }
  }
  const auto active = active_terms(with_news, flags);
  Var logits = params.contains("fusion.blend_logits") ? params.at("fusion.blend_logits") : Var();
  FusionResult r;
  r.blend = blend(terms, logits, active);
  r.features = r.blend.output;
  return r;
}

}  // namespace snf
