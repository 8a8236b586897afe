#pragma once

// News-price fusion. Inputs are the pooled news sequence N (T×d) and the
// scalar normalized closes (T×1); output is the T×d stock-aware sequence.
//
//   denseP = lift(closes) Wp + bp        denseN = N Wn + bn
//   S_P2N  = cross_att(denseP, denseN, denseN)
//   S_N2P  = cross_att(denseN, denseP, denseP)
//   S_GCN  = causal_conv(ReLU(Â X W + b)[price rows]),  X = [denseN; denseP]
//   out    = Σ softmax(active blend logits)ᵢ · termᵢ

#include <array>
#include <span>
#include <cstdint>
#include <string>
#include <vector>

#include "snf/autodiff.hpp"
#include "snf/params.hpp"

namespace snf {

inline constexpr std::size_t kConvTaps = 5;

/// Blend terms in their fixed order.
enum class BlendTerm { dense_news = 0, dense_price = 1, p2n = 2, n2p = 3, gcn = 4 };
inline constexpr std::size_t kBlendTerms = 5;
const char* blend_term_name(BlendTerm term);

struct FusionFlags {
  bool gcn = true;
  bool p2n = true;
  bool n2p = true;
};

/// Attention weights for inspection alongside the attended output.
struct AttentionResult {
  Var output;   // T_Q×d
  Var weights;  // T_Q×T_K
};

/// softmax((Q Wq)(K Wk)ᵀ / √d)(V Wv).
AttentionResult cross_att(const Var& q, const Var& k, const Var& v, const Var& wq, const Var& wk,
                          const Var& wv);

/// Â for the 2T-node graph (news rows first): news_t—price_t edges plus
/// self-loops, symmetrically normalised.
Tensor gcn_adjacency(std::size_t days, bool with_edges = true);

/// out[t] = Σ_k x[t-k] K_k + b over k = 0..taps-1, zero left padding.
Var causal_conv(const Var& x, std::span<const Var> taps, const Var& bias);

struct GcnWeights {
  Var w, b;
  std::array<Var, kConvTaps> taps;
  Var conv_bias;
};
Var gcn_fuse(const Var& news, const Var& prices, const GcnWeights& weights, const Tensor& adjacency);

/// Indices of active blend terms, in fixed order. `news` false leaves only
/// the price term (the news path is unplugged).
std::vector<std::size_t> active_terms(bool news, const FusionFlags& flags);

struct BlendResult {
  Var output;
  Var weights;  // 1×|active|
  std::vector<std::size_t> active;
};
/// terms must hold kBlendTerms entries; inactive entries may be empty Vars.
BlendResult blend(std::span<const Var> terms, const Var& logits, std::span<const std::size_t> active);

/// Registers only what the active terms use; blend logits (zero init, one
/// per active term) only when more than one term is active.
void init_fusion(ParamSet& params, std::size_t dim, std::uint64_t seed, bool news, const FusionFlags& flags);

struct FusionResult {
  Var features;  // T×d
  BlendResult blend;
};

/// `news` is the pooled T×d sequence, or an empty Var when pooling is none.
FusionResult fuse(const ParamSet& params, const Var& news, const Var& closes, const FusionFlags& flags);

}  // namespace snf
