#pragma once

// Patch reprogramming onto a frozen, seeded surrogate transformer.
//
//   prototypes = Wᵀ vocab                          (U×D, W is V×U)
//   tokens     = attention(lift(patches), prototypes) Wo
//   sequence   = [prompt token ;] tokens  → frozen encoder blocks → final LN
//   prediction = flatten(patch positions)/sqrt(n_p·D) head   (1×H)

#include <cstdint>
#include <filesystem>
#include <optional>

#include "snf/autodiff.hpp"
#include "snf/params.hpp"

namespace snf {

struct BackboneConfig {
  std::size_t d_model = 32;
  std::size_t vocab_size = 128;
  std::size_t prototypes = 16;
  std::size_t patch_len = 5;
  std::size_t stride = 5;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 64;
  std::size_t reprogram_heads = 1;
  /// Parameter-free LayerNorm on reprogramming queries and keys (per head).
  bool qk_norm = true;
};

std::size_t patch_count(std::size_t days, std::size_t patch_len, std::size_t stride);

Var make_prototypes(const Var& vocab, const Var& mapping);
/// n_p × (patch_len·d), each patch flattened time-major.
Var patchify(const Var& features, std::size_t patch_len, std::size_t stride);

struct Attention {
  Var output;
  Var weights;  // per head, concatenated column-wise: rows × (heads·keys)
};
/// Scaled dot-product attention split into `heads` column groups
/// (1/√(D/heads) scaling), followed by the output projection wo. With
/// `qk_norm` each head's query and key rows are layer-normalised first.
Attention multi_head_attention(const Var& queries, const Var& keys_values_src, const Var& wq, const Var& wk,
                               const Var& wv, const Var& wo, std::size_t heads, bool qk_norm = false);
/// Reprogramming attention: lifted patches attend over prototypes.
Attention reprogram(const ParamSet& params, const Var& patch_tokens, const Var& prototypes, std::size_t heads,
                    bool qk_norm = false);

/// Frozen pre-LN encoder block stack; the final norm is applied by forward_backbone.
Var encoder_blocks(const ParamSet& params, const Var& x, const BackboneConfig& config);

/// Frozen vocab (seeded N(0,1) unless `vocab_file` is given), blocks and final norm;
/// trainable mapping, patch lift, reprogramming projections, head and,
/// with SNP on, the prompt lift.
void init_backbone(ParamSet& params, const BackboneConfig& config, std::size_t dim, std::size_t days,
                   std::size_t horizon, bool snp, std::uint64_t seed,
                   const std::optional<std::filesystem::path>& vocab_file = std::nullopt);

/// features T×d; name 1×d (used only with SNP); returns 1×H.
Var forward_backbone(const ParamSet& params, const BackboneConfig& config, const Var& features, const Var& name,
                     bool snp);

}  // namespace snf
