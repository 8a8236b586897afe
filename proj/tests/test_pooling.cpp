#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "snf/errors.hpp"
#include "snf/optim.hpp"
#include "snf/pooling.hpp"
#include "support.hpp"

using namespace snf;
using namespace testing_support;

namespace {

Var c(const Tensor& t) { return Var::constant(t); }

double weight_sum(const PoolResult& r) {
  double s = 0.0;
  for (double w : r.weights.value().data()) s += w;
  return s;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out(i, j) = t(perm[i], j);
  return out;
}

}  // namespace

TEST_CASE("positional table") {
  PositionalTable table(50, 6);
  CHECK(table.table()(0, 0) == 0.0);
  CHECK(table.table()(0, 1) == 1.0);
  CHECK(table.table()(3, 2) == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 6.0))));
  CHECK(table.table()(3, 3) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 2.0 / 6.0))));
  CHECK(table.rows(4).rows() == 4);
  CHECK_THROWS_AS(table.rows(51), ContractError);
}

TEST_CASE("ap examples") {
  auto b1 = Tensor::matrix(1, 2, {0.3, -0.7});
  auto r = pool_ap(c(b1), c(Tensor::matrix(1, 2, {5, 9})));
  CHECK(r.pooled.value().bit_equal(b1));

  auto r2 = pool_ap(c(Tensor::matrix(2, 2, {2, 0, 0, 2})), c(Tensor::matrix(1, 2, {1, 0})));
  CHECK(r2.pooled.value()[0] == doctest::Approx(1.761594).epsilon(1e-6));
  CHECK(r2.pooled.value()[1] == doctest::Approx(0.238406).epsilon(1e-6));
  CHECK(weight_sum(r2) == doctest::Approx(1.0).epsilon(1e-12));

  auto same = Tensor::matrix(3, 2, {0.5, 1.5, 0.5, 1.5, 0.5, 1.5});
  auto r3 = pool_ap(c(same), c(Tensor::matrix(1, 2, {0.2, -1})));
  CHECK(std::fabs(r3.pooled.value()[0] - 0.5) < 1e-15);
  CHECK(std::fabs(r3.pooled.value()[1] - 1.5) < 1e-15);

  auto z = pool_ap(Var(), c(Tensor::matrix(1, 2, {1, 1})));
  CHECK(z.degenerate);
  CHECK(z.pooled.value().bit_equal(Tensor({1, 2})));
}

TEST_CASE("cap examples") {
  auto r = pool_cap(c(Tensor::identity(2)), c(Tensor::matrix(1, 2, {1, 0})), c(Tensor::identity(2)));
  CHECK(r.pooled.value()[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(r.pooled.value()[1] == doctest::Approx(0.268941).epsilon(1e-6));

  auto b = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 9});
  auto u = pool_cap(c(b), c(Tensor::matrix(1, 2, {0.4, 0.1})), c(Tensor({2, 2})));
  CHECK(u.pooled.value()[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(u.pooled.value()[1] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(pool_cap(Var(), c(Tensor::matrix(1, 2, {1, 0})), c(Tensor::identity(2))).degenerate);
}

TEST_CASE("cap argmax invariance under positive scaling of e") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lam(0.05, 20.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto b = to_tensor(oracle::random_mat(rng, 5, 4));
    auto e = to_tensor(oracle::random_mat(rng, 1, 4));
    auto wc = to_tensor(oracle::random_mat(rng, 4, 4));
    auto base = pool_cap(c(b), c(e), c(wc)).weights.value();
    Tensor scaled = e;
    const double l = lam(rng);
    for (double& v : scaled.data()) v *= l;
    auto other = pool_cap(c(b), c(scaled), c(wc)).weights.value();
    auto argmax = [](const Tensor& t) {
      return std::max_element(t.data().begin(), t.data().end()) - t.data().begin();
    };
    CHECK(argmax(base) == argmax(other));
  }
}

TEST_CASE("sap examples") {
  auto e = Tensor::matrix(1, 2, {0.6, -0.2});
  auto r = pool_sap(Var(), c(e), c(Tensor::matrix(1, 2, {3, 3})));
  CHECK_FALSE(r.degenerate);
  CHECK(r.pooled.value().bit_equal(e));

  auto r2 = pool_sap(c(Tensor::matrix(1, 2, {1, 0})), c(Tensor::matrix(1, 2, {1, 0})),
                     c(Tensor::matrix(1, 2, {-4, 7})));
  CHECK(r2.pooled.value()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r2.pooled.value()[1] == 0.0);
  CHECK(r2.weights.cols() == 2);
}

TEST_CASE("pasap examples") {
  std::mt19937_64 rng(5);
  PositionalTable table(16, 3);
  auto b = to_tensor(oracle::random_mat(rng, 4, 3));
  auto wp = to_tensor(oracle::random_mat(rng, 1, 3));
  auto zero_e = Tensor({1, 3});
  // S = 0 and e = 0 reduce to AP; emulate S = 0 by subtracting it from B.
  Tensor b_minus_s = b;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) b_minus_s(i, j) -= table.table()(i, j);
  auto pa = pool_pasap(c(b_minus_s), c(zero_e), c(wp), table).pooled.value();
  auto ap = pool_ap(c(b), c(wp)).pooled.value();
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(pa[j] - ap[j]) < 1e-14);

  auto one = to_tensor(oracle::random_mat(rng, 1, 3));
  auto e = to_tensor(oracle::random_mat(rng, 1, 3));
  auto r = pool_pasap(c(one), c(e), c(wp), table).pooled.value();
  for (std::size_t j = 0; j < 3; ++j) CHECK(r[j] == one[j] + table.table()(0, j) + e[j]);

  auto swapped = permute_rows(b, {1, 0, 2, 3});
  auto r1 = pool_pasap(c(b), c(e), c(wp), table).pooled.value();
  auto r2 = pool_pasap(c(swapped), c(e), c(wp), table).pooled.value();
  CHECK_FALSE(r1.bit_equal(r2));

  CHECK(pool_pasap(Var(), c(e), c(wp), table).degenerate);
  auto too_many = to_tensor(oracle::random_mat(rng, 17, 3));
  CHECK_THROWS_AS(pool_pasap(c(too_many), c(e), c(wp), table), ContractError);
}

TEST_CASE("pooling variants match scalar-loop oracles") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> n_dist(1, 6), d_dist(1, 8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = n_dist(rng), d = d_dist(rng);
    auto b = oracle::random_mat(rng, n, d);
    auto e = oracle::random_mat(rng, 1, d)[0];
    auto w = oracle::random_mat(rng, 1, d)[0];
    auto wc = oracle::random_mat(rng, d, d);
    PositionalTable table(8, d);
    CHECK(oracle::max_abs_diff(to_vec(pool_ap(c(to_tensor(b)), c(to_row(w))).pooled.value()), oracle::ap(b, w)) <=
          1e-10);
    CHECK(oracle::max_abs_diff(to_vec(pool_cap(c(to_tensor(b)), c(to_row(e)), c(to_tensor(wc))).pooled.value()),
                               oracle::cap(b, e, wc)) <= 1e-10);
    CHECK(oracle::max_abs_diff(to_vec(pool_sap(c(to_tensor(b)), c(to_row(e)), c(to_row(w))).pooled.value()),
                               oracle::sap(b, e, w)) <= 1e-10);
    CHECK(oracle::max_abs_diff(
              to_vec(pool_pasap(c(to_tensor(b)), c(to_row(e)), c(to_row(w)), table).pooled.value()),
              oracle::pasap(b, e, w)) <= 1e-10);
  }
}

TEST_CASE("weights sum to one and ap/cap stay in the convex hull") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + trial % 4, d = 1 + trial % 3;
    auto b = to_tensor(oracle::random_mat(rng, n, d, -2, 2));
    auto e = to_tensor(oracle::random_mat(rng, 1, d));
    auto w = to_tensor(oracle::random_mat(rng, 1, d));
    auto wc = to_tensor(oracle::random_mat(rng, d, d));
    PositionalTable table(8, d);
    for (const auto& r : {pool_ap(c(b), c(w)), pool_cap(c(b), c(e), c(wc)), pool_sap(c(b), c(e), c(w)),
                          pool_pasap(c(b), c(e), c(w), table)}) {
      CHECK(std::fabs(weight_sum(r) - 1.0) <= 1e-12);
    }
    // Barycentric residual: the returned weights reconstruct the pooled point.
    for (const auto& r : {pool_ap(c(b), c(w)), pool_cap(c(b), c(e), c(wc))}) {
      for (double wi : r.weights.value().data()) CHECK(wi >= 0.0);
      for (std::size_t j = 0; j < d; ++j) {
        double recon = 0.0;
        for (std::size_t i = 0; i < n; ++i) recon += r.weights.value()[i] * b(i, j);
        CHECK(std::fabs(recon - r.pooled.value()[j]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("permutation invariance of ap, cap and sap; pasap is order-aware") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + trial % 5, d = 3;
    auto b = to_tensor(oracle::random_mat(rng, n, d, -2, 2));
    auto e = to_tensor(oracle::random_mat(rng, 1, d));
    auto w = to_tensor(oracle::random_mat(rng, 1, d));
    auto wc = to_tensor(oracle::random_mat(rng, d, d));
    PositionalTable table(8, d);
    const auto ap0 = pool_ap(c(b), c(w)).pooled.value();
    const auto cap0 = pool_cap(c(b), c(e), c(wc)).pooled.value();
    const auto sap0 = pool_sap(c(b), c(e), c(w)).pooled.value();
    const auto pa0 = pool_pasap(c(b), c(e), c(w), table).pooled.value();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    bool pasap_changed = false;
    for (int k = 0; k < 20; ++k) {
      std::shuffle(perm.begin(), perm.end(), rng);
      auto pb = permute_rows(b, perm);
      CHECK(pool_ap(c(pb), c(w)).pooled.value().bit_equal(ap0));
      CHECK(pool_cap(c(pb), c(e), c(wc)).pooled.value().bit_equal(cap0));
      CHECK(pool_sap(c(pb), c(e), c(w)).pooled.value().bit_equal(sap0));
      pasap_changed |= !pool_pasap(c(pb), c(e), c(w), table).pooled.value().bit_equal(pa0);
    }
    CHECK(pasap_changed);
  }
}

TEST_CASE("pooling gradients pass the finite-difference check") {
  std::mt19937_64 rng(41);
  const std::size_t d = 4;
  auto b = to_tensor(oracle::random_mat(rng, 3, d, -2, 2));
  auto e = to_tensor(oracle::random_mat(rng, 1, d));
  auto probe = to_tensor(oracle::random_mat(rng, 1, d));
  PositionalTable table(8, d);
  for (auto variant : {PoolingVariant::ap, PoolingVariant::cap, PoolingVariant::sap, PoolingVariant::pasap}) {
    ParamSet params;
    init_pooling(params, variant, d, 7);
    CHECK(params.size() == 1);
    auto loss = [&](ParamSet& p) {
      auto r = pool_day(variant, p, c(b), c(e), table);
      return ops::sum(ops::hadamard(r.pooled, c(probe)));
    };
    auto report = finite_diff_check(loss, params);
    INFO(pooling_name(variant), " worst ", report.worst_rel_error);
    CHECK(report.passed());
  }
}

TEST_CASE("init registers only the active variant") {
  ParamSet p;
  init_pooling(p, PoolingVariant::cap, 3, 1);
  CHECK(p.contains("pool.Wc"));
  CHECK_FALSE(p.contains("pool.w"));
  const auto& wc = p.at("pool.Wc").value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(wc(i, i) - 1.0) < 0.2);
  ParamSet none;
  init_pooling(none, PoolingVariant::none, 3, 1);
  CHECK(none.size() == 0);
  CHECK(parse_pooling("pasap") == PoolingVariant::pasap);
  CHECK_FALSE(parse_pooling("max").has_value());
}
