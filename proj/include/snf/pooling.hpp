#pragma once

// Collapse one trading day's news matrix B (n×d) into a single 1×d vector.
//
//   ap     c = softmax(w Bᵀ) B
//   cap    c = softmax(e W_c Bᵀ) B
//   sap    c = softmax(w_s B̃ᵀ) B̃,   B̃ = [e; B]
//   pasap  c = softmax(w_p B̄ᵀ) B̄,   B̄ = B + E + S[0..n)
//
// A day without articles is passed as an empty Var.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "snf/autodiff.hpp"
#include "snf/params.hpp"

namespace snf {

enum class PoolingVariant { none, ap, cap, sap, pasap };

std::optional<PoolingVariant> parse_pooling(std::string_view name);
const char* pooling_name(PoolingVariant variant);
/// cap, sap and pasap read the stock-name embedding.
bool uses_name(PoolingVariant variant);

/// Sinusoidal table S[pos][2i] = sin(pos / 10000^(2i/d)), S[pos][2i+1] = cos(...).
class PositionalTable {
 public:
  PositionalTable() = default;
  PositionalTable(std::size_t max_len, std::size_t dim);

  std::size_t max_len() const noexcept { return max_len_; }
  std::size_t dim() const noexcept { return dim_; }
  const Tensor& table() const noexcept { return table_; }
  /// First n rows; ContractError when n exceeds max_len.
  Tensor rows(std::size_t n) const;

 private:
  std::size_t max_len_ = 0;
  std::size_t dim_ = 0;
  Tensor table_;
};

struct PoolResult {
  Var pooled;        // 1×d
  Var weights;       // 1×rows attended over; empty when degenerate
  bool degenerate = false;
};

PoolResult pool_ap(const Var& news, const Var& w);
PoolResult pool_cap(const Var& news, const Var& name, const Var& w_c);
PoolResult pool_sap(const Var& news, const Var& name, const Var& w_s);
PoolResult pool_pasap(const Var& news, const Var& name, const Var& w_p, const PositionalTable& table);

/// Parameter id of the active variant's tensor ("pool.w", "pool.Wc", ...).
std::string pooling_param_id(PoolingVariant variant);

/// Registers only the active variant's parameter:
/// vectors ~ N(0, 1/d), W_c = I + N(0, 0.02²).
void init_pooling(ParamSet& params, PoolingVariant variant, std::size_t dim, std::uint64_t seed);

/// Dispatches on the variant using the parameters registered by init_pooling.
PoolResult pool_day(PoolingVariant variant, const ParamSet& params, const Var& news, const Var& name,
                    const PositionalTable& table);

}  // namespace snf
