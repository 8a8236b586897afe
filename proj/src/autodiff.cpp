#include "snf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include <fmt/format.h>

#include "snf/errors.hpp"

namespace snf {

Tensor& Node::ensure_grad() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss || loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss ? shape_string(loss.value().shape()) : std::string("<null>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; graphs for a batch can be thousands of nodes deep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Intermediate gradients are no longer needed; keep leaves only.
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

namespace ops {
namespace {

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& v : inputs) {
    if (v.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (Var& v : inputs) node->parents.push_back(v.node());
    node->backward = std::move(fn);
  }
  return Var::from_node(std::move(node));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op,
                                     shape_string(a.value().shape()),
                                     shape_string(b.value().shape())));
  }
}

void require_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) throw NumericError(fmt::format("{}: non-finite input", op));
}

// C += A·B (A m×k, B k×n)
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
    }
  }
}

// C += Aᵀ·B (A k×m, B k×n)
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
    }
  }
}

// C += A·Bᵀ (A m×k, B n×k)
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
  }
}

// Sum whose result does not depend on the order of `terms`: addends are
// sorted by (|x|, x) first, which fixes a canonical evaluation order.
double order_invariant_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end(), [](double a, double b) {
    const double fa = std::fabs(a), fb = std::fabs(b);
    return fa < fb || (fa == fb && a < b);
  });
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

template <typename F>
Var unary_map(const Var& x, F forward_fn, std::function<double(double, double)> derivative) {
  Tensor out(x.value().shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward_fn(in[i]);
  return make_result(std::move(out), {x}, [derivative](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * derivative(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError(fmt::format("matmul: incompatible shapes {} and {}",
                                     shape_string(av.shape()), shape_string(bv.shape())));
  }
  Tensor out({av.rows(), bv.cols()});
  gemm_acc(av, bv, out);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) gemm_nt_acc(self.grad, pb.value, pa.ensure_grad());
    if (pb.requires_grad) gemm_tn_acc(pa.value, self.grad, pb.ensure_grad());
  });
}

Var transpose(const Var& a) {
  const Tensor& v = a.value();
  const std::size_t m = v.rows(), n = v.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = v(i, j);
  return make_result(std::move(out), {a}, [m, n](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g(i, j) += self.grad(j, i);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape("hadamard", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return make_result(std::move(out), {a}, [factor](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Var add_row(const Var& a, const Var& row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError(fmt::format("add_row: cannot broadcast {} over {}",
                                     shape_string(rv.shape()), shape_string(av.shape())));
  }
  Tensor out = av;
  const std::size_t m = av.rows(), n = av.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += rv(0, j);
  return make_result(std::move(out), {a, row}, [m, n](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g(0, j) += self.grad(i, j);
    }
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) {
    throw DimensionError("mul_scalar: factor must be 1x1, got " + shape_string(s.value().shape()));
  }
  const double factor = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return make_result(std::move(out), {a, s}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    const double f = ps.value[0];
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * f;
    }
    if (ps.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.value[i];
      ps.ensure_grad()[0] += acc;
    }
  });
}

Var softmax_rows(const Var& x) {
  const Tensor& xv = x.value();
  require_finite("softmax_rows", xv);
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({m, n});
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = xv(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv(i, j));
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(xv(i, j) - mx);
      terms[j] = out(i, j);
    }
    const double z = order_invariant_sum(terms);
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= z;
  }
  return make_result(std::move(out), {x}, [m, n](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad(i, j) * self.value(i, j);
      for (std::size_t j = 0; j < n; ++j) g(i, j) += self.value(i, j) * (self.grad(i, j) - dot);
    }
  });
}

Var weighted_rows(const Var& weights, const Var& rows) {
  const Tensor& wv = weights.value();
  const Tensor& rv = rows.value();
  if (wv.rows() != 1 || wv.cols() != rv.rows()) {
    throw DimensionError(fmt::format("weighted_rows: weights {} do not match rows {}",
                                     shape_string(wv.shape()), shape_string(rv.shape())));
  }
  const std::size_t n = rv.rows(), d = rv.cols();
  Tensor out({1, d});
  std::vector<double> terms(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) terms[i] = wv(0, i) * rv(i, j);
    out(0, j) = order_invariant_sum(terms);
  }
  return make_result(std::move(out), {weights, rows}, [n, d](Node& self) {
    Node& pw = *self.parents[0];
    Node& pr = *self.parents[1];
    if (pw.requires_grad) {
      Tensor& g = pw.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g(0, i) += self.grad(0, j) * pr.value(i, j);
    }
    if (pr.requires_grad) {
      Tensor& g = pr.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g(i, j) += self.grad(0, j) * pw.value(0, i);
    }
  });
}

Var relu(const Var& x) {
  return unary_map(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return unary_map(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(c * (v + a * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      });
}

Var square(const Var& x) {
  return unary_map(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(const Var& x) {
  return unary_map(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) {
      throw DimensionError(fmt::format("concat_rows: column mismatch {} vs {}", n, p.cols()));
    }
    m += p.rows();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.rows() != m) {
      throw DimensionError(fmt::format("concat_cols: row mismatch {} vs {}", m, p.rows()));
    }
    n += p.cols();
  }
  Tensor out({m, n});
  std::size_t col = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, col + j) = v(i, j);
    col += v.cols();
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [m](Node& self) {
    std::size_t c0 = 0;
    for (auto& p : self.parents) {
      const std::size_t w = p->value.cols();
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g(i, j) += self.grad(i, c0 + j);
      }
      c0 += w;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& v = x.value();
  if (count == 0 || begin + count > v.rows()) {
    throw DimensionError(fmt::format("slice_rows: [{}, {}) out of {} rows", begin, begin + count, v.rows()));
  }
  const std::size_t n = v.cols();
  auto src = v.data().subspan(begin * n, count * n);
  Tensor out({count, n}, std::vector<double>(src.begin(), src.end()));
  return make_result(std::move(out), {x}, [begin, n](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& v = x.value();
  if (count == 0 || begin + count > v.cols()) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) out of {} cols", begin, begin + count, v.cols()));
  }
  const std::size_t m = v.rows();
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = v(i, begin + j);
  return make_result(std::move(out), {x}, [begin, m, count](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g(i, begin + j) += self.grad(i, j);
  });
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.value().size()) {
    throw DimensionError(fmt::format("reshape: {} -> [{}x{}] changes element count",
                                     shape_string(x.value().shape()), rows, cols));
  }
  const auto src = x.value().data();
  Tensor out({rows, cols}, std::vector<double>(src.begin(), src.end()));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var shift_rows_down(const Var& x, std::size_t k) {
  const Tensor& v = x.value();
  const std::size_t m = v.rows(), n = v.cols();
  Tensor out({m, n});
  for (std::size_t t = k; t < m; ++t)
    for (std::size_t j = 0; j < n; ++j) out(t, j) = v(t - k, j);
  return make_result(std::move(out), {x}, [k, m, n](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t t = k; t < m; ++t)
      for (std::size_t j = 0; j < n; ++j) g(t - k, j) += self.grad(t, j);
  });
}

Var element(const Var& x, std::size_t r, std::size_t c) {
  const Tensor& v = x.value();
  if (r >= v.rows() || c >= v.cols()) {
    throw DimensionError(fmt::format("element ({}, {}) outside {}", r, c, shape_string(v.shape())));
  }
  return make_result(Tensor::scalar(v(r, c)), {x}, [r, c](Node& self) {
    self.parents[0]->ensure_grad()(r, c) += self.grad[0];
  });
}

Var select_cols(const Var& x, std::span<const std::size_t> indices) {
  const Tensor& v = x.value();
  if (indices.empty()) throw ContractError("select_cols: empty index set");
  const std::size_t m = v.rows();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  for (std::size_t c : idx) {
    if (c >= v.cols()) throw DimensionError(fmt::format("select_cols: column {} out of {}", c, v.cols()));
  }
  Tensor out({m, idx.size()});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out(i, j) = v(i, idx[j]);
  return make_result(std::move(out), {x}, [idx, m](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) g(i, idx[j]) += self.grad(i, j);
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw DimensionError(fmt::format("layer_norm_rows: affine params must have {} entries", n));
  }
  Tensor out({m, n});
  Tensor xhat({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (xv(i, j) - mu) * inv_std[i];
      out(i, j) = gamma.value()[j] * xhat(i, j) + beta.value()[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), m, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    if (pg.requires_grad) {
      Tensor& g = pg.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad(i, j) * xhat(i, j);
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad(i, j);
    }
    if (px.requires_grad) {
      Tensor& g = px.ensure_grad();
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dxh = self.grad(i, j) * pg.value[j];
          s1 += dxh;
          s2 += dxh * xhat(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double dxh = self.grad(i, j) * pg.value[j];
          g(i, j) += inv_std[i] * (dxh - inv_n * s1 - xhat(i, j) * inv_n * s2);
        }
      }
    }
  });
}

}  // namespace ops
}  // namespace snf
