#include "snf/backbone.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snf/dataset.hpp"
#include "snf/errors.hpp"

namespace snf {

std::size_t patch_count(std::size_t days, std::size_t patch_len, std::size_t stride) {
  if (patch_len == 0 || stride == 0) throw ContractError("patch_len and stride must be positive");
  if (patch_len > days) throw ContractError(fmt::format("patch_len {} exceeds window length {}", patch_len, days));
  return (days - patch_len) / stride + 1;
}

Var make_prototypes(const Var& vocab, const Var& mapping) {
  if (mapping.rows() != vocab.rows()) {
    throw DimensionError(fmt::format("make_prototypes: mapping {} vs vocab {}", shape_string(mapping.value().shape()),
                                     shape_string(vocab.value().shape())));
  }
  if (mapping.cols() > mapping.rows()) {
    throw ContractError(fmt::format("make_prototypes: U={} exceeds V={}", mapping.cols(), mapping.rows()));
  }
  return ops::matmul(ops::transpose(mapping), vocab);
}

Var patchify(const Var& features, std::size_t patch_len, std::size_t stride) {
  const std::size_t n = patch_count(features.rows(), patch_len, stride);
  const std::size_t d = features.cols();
  std::vector<Var> patches;
  patches.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    patches.push_back(ops::reshape(ops::slice_rows(features, p * stride, patch_len), 1, patch_len * d));
  }
  return ops::concat_rows(patches);
}

Attention multi_head_attention(const Var& queries, const Var& source, const Var& wq, const Var& wk, const Var& wv,
                               const Var& wo, std::size_t heads, bool qk_norm) {
  Var q = ops::matmul(queries, wq);
  Var k = ops::matmul(source, wk);
  Var v = ops::matmul(source, wv);
  const std::size_t width = q.cols();
  if (heads == 0 || width % heads != 0) {
    throw ContractError(fmt::format("attention width {} not divisible into {} heads", width, heads));
  }
  const std::size_t hd = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs, weights;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : ops::slice_cols(q, h * hd, hd);
    Var kh = heads == 1 ? k : ops::slice_cols(k, h * hd, hd);
    if (qk_norm) {
      const Var g = Var::constant(Tensor({1, hd}, 1.0)), b = Var::constant(Tensor({1, hd}));
      qh = ops::layer_norm_rows(qh, g, b);
      kh = ops::layer_norm_rows(kh, g, b);
    }
    Var vh = heads == 1 ? v : ops::slice_cols(v, h * hd, hd);
    Var w = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), scale));
    outs.push_back(ops::matmul(w, vh));
    weights.push_back(w);
  }
  Var merged = heads == 1 ? outs[0] : ops::concat_cols(outs);
  Var all_weights = heads == 1 ? weights[0] : ops::concat_cols(weights);
  return {ops::matmul(merged, wo), all_weights};
}

Attention reprogram(const ParamSet& params, const Var& patch_tokens, const Var& prototypes, std::size_t heads,
                    bool qk_norm) {
  return multi_head_attention(patch_tokens, prototypes, params.at("reprogram.wq"), params.at("reprogram.wk"),
                              params.at("reprogram.wv"), params.at("reprogram.wo"), heads, qk_norm);
}

namespace {

Var dense(const ParamSet& params, const std::string& prefix, const Var& x) {
  return ops::add_row(ops::matmul(x, params.at(prefix + ".w")), params.at(prefix + ".b"));
}

Tensor scaled_gaussian(std::uint64_t seed, const std::string& id, std::size_t in, std::size_t out) {
  return gaussian(seed, id, {in, out}, std::sqrt(1.0 / static_cast<double>(in)));
}

}  // namespace

Var encoder_blocks(const ParamSet& params, const Var& input, const BackboneConfig& config) {
  Var x = input;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = fmt::format("backbone.{}.", l);
    Var h = ops::layer_norm_rows(x, params.at(p + "ln1.g"), params.at(p + "ln1.b"));
    x = x + multi_head_attention(h, h, params.at(p + "attn.wq"), params.at(p + "attn.wk"), params.at(p + "attn.wv"),
                                 params.at(p + "attn.wo"), config.heads)
                .output;
    h = ops::layer_norm_rows(x, params.at(p + "ln2.g"), params.at(p + "ln2.b"));
    h = ops::gelu(dense(params, p + "ffn1", h));
    x = x + dense(params, p + "ffn2", h);
  }
  return x;
}

void init_backbone(ParamSet& params, const BackboneConfig& config, std::size_t dim, std::size_t days,
                   std::size_t horizon, bool snp, std::uint64_t seed,
                   const std::optional<std::filesystem::path>& vocab_file) {
  const std::size_t D = config.d_model;
  if (config.prototypes == 0 || config.prototypes > config.vocab_size) {
    throw ContractError(fmt::format("prototypes U={} must be in 1..V={}", config.prototypes, config.vocab_size));
  }
  const std::size_t n_p = patch_count(days, config.patch_len, config.stride);

  // Frozen surrogate.
  if (vocab_file) {
    DailyNewsBatch v = parse_news_day(read_file(*vocab_file), vocab_file->string());
    if (v.count != config.vocab_size || v.dim != D) {
      throw FormatError(fmt::format("{}: vocabulary is {}x{}, config expects {}x{}", vocab_file->string(), v.count,
                                    v.dim, config.vocab_size, D));
    }
    params.add("vocab", Tensor({v.count, v.dim}, v.values), true);
  } else {
    params.add("vocab", gaussian(seed, "vocab", {config.vocab_size, D}, 1.0), true);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = fmt::format("backbone.{}.", l);
    for (const char* ln : {"ln1", "ln2"}) {
      params.add(p + ln + ".g", Tensor({1, D}, 1.0), true);
      params.add(p + ln + ".b", Tensor({1, D}), true);
    }
    for (const char* m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      params.add(p + m, scaled_gaussian(seed, p + m, D, D), true);
    }
    params.add(p + "ffn1.w", scaled_gaussian(seed, p + "ffn1.w", D, config.ffn), true);
    params.add(p + "ffn1.b", Tensor({1, config.ffn}), true);
    params.add(p + "ffn2.w", scaled_gaussian(seed, p + "ffn2.w", config.ffn, D), true);
    params.add(p + "ffn2.b", Tensor({1, D}), true);
  }
  params.add("backbone.ln_f.g", Tensor({1, D}, 1.0), true);
  params.add("backbone.ln_f.b", Tensor({1, D}), true);

  // Trainable reprogramming layers and head.
  params.add("reprogram.mapping",
             scaled_gaussian(seed, "reprogram.mapping", config.vocab_size, config.prototypes));
  params.add("reprogram.patch_lift.w", scaled_gaussian(seed, "reprogram.patch_lift.w", config.patch_len * dim, D));
  params.add("reprogram.patch_lift.b", Tensor({1, D}));
  for (const char* m : {"reprogram.wq", "reprogram.wk", "reprogram.wv", "reprogram.wo"}) {
    params.add(m, scaled_gaussian(seed, m, D, D));
  }
  if (snp) {
    params.add("reprogram.prompt_lift.w", scaled_gaussian(seed, "reprogram.prompt_lift.w", dim, D));
    params.add("reprogram.prompt_lift.b", Tensor({1, D}));
  }
  params.add("head.w", scaled_gaussian(seed, "head.w", n_p * D, horizon));
  params.add("head.b", Tensor({1, horizon}));
}

Var forward_backbone(const ParamSet& params, const BackboneConfig& config, const Var& features, const Var& name,
                     bool snp) {
  Var prototypes = make_prototypes(params.at("vocab"), params.at("reprogram.mapping"));
  Var patches = patchify(features, config.patch_len, config.stride);
  Var lifted = dense(params, "reprogram.patch_lift", patches);
  Var tokens = reprogram(params, lifted, prototypes, config.reprogram_heads, config.qk_norm).output;
  const std::size_t n_p = tokens.rows();
  Var sequence = tokens;
  if (snp) {
    const Var parts[] = {dense(params, "reprogram.prompt_lift", name), tokens};
    sequence = ops::concat_rows(parts);
  }
  Var hidden = encoder_blocks(params, sequence, config);
  hidden = ops::layer_norm_rows(hidden, params.at("backbone.ln_f.g"), params.at("backbone.ln_f.b"));
  Var patch_rows = snp ? ops::slice_rows(hidden, 1, n_p) : hidden;
  // Head input carries a fixed 1/sqrt(fan-in) multiplier.
  const double readout = 1.0 / std::sqrt(static_cast<double>(n_p * config.d_model));
  Var flat = ops::scale(ops::reshape(patch_rows, 1, n_p * config.d_model), readout);
  return dense(params, "head", flat);
}

}  // namespace snf
