#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "snf/config.hpp"
#include "snf/errors.hpp"
#include "snf/io.hpp"
#include "snf/optim.hpp"
#include "snf/synth.hpp"
#include "snf/training.hpp"
#include "support.hpp"

using namespace snf;
using namespace testing_support;

namespace {

PreparedDataset small_market(const std::filesystem::path& dir, std::size_t dim = 4) {
  MarketOptions o;
  o.stocks = 2;
  o.days = 260;
  o.dim = dim;
  write_market_dataset(dir, o);
  return prepare_dataset(dir, {});
}

Model fresh_model(const RunConfig& cfg, const Dataset& ds) {
  Model m(cfg.model_config(ds.dim));
  m.set_contexts(ds.stocks);
  return m;
}

}  // namespace

TEST_CASE("mse_loss") {
  auto one = [](std::vector<double> v) { return Var::constant(Tensor::row(v)); };
  CHECK(mse_loss(one({1, 2}), one({1, 2})).value().item() == 0.0);
  CHECK(mse_loss(one({1, 2}), one({1, 3})).value().item() == doctest::Approx(0.5));
  CHECK_THROWS_AS(mse_loss(one({1, 2}), one({1, 2, 3})), ContractError);

  ParamSet ps;
  ps.add("pred", Tensor::matrix(2, 2, {0.3, -1.2, 2.0, 0.7}));
  const Tensor target = Tensor::matrix(2, 2, {0.1, 0.4, -0.5, 1.0});
  auto loss = [&](ParamSet& p) { return mse_loss(p.at("pred"), Var::constant(target)); };
  GradMap g = backward(loss(ps), ps);
  const Tensor& grad = g.at("pred");
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(grad.data()[i] == doctest::Approx(2.0 * (ps.at("pred").value().data()[i] - target.data()[i]) / 4.0));
  }
  CHECK(finite_diff_check(loss, ps).passed());
}

TEST_CASE("metrics") {
  const std::vector<double> a{1, 2}, b{1, 3};
  auto same = metrics(a, a);
  CHECK(same.mae == 0.0);
  CHECK(same.mse == 0.0);
  auto m = metrics(a, b);
  CHECK(m.mae == doctest::Approx(0.5));
  CHECK(m.mse == doctest::Approx(0.5));
  CHECK_THROWS_AS(metrics(std::vector<double>{}, std::vector<double>{}), ContractError);
  CHECK_THROWS_AS(metrics(a, std::vector<double>{1.0}), ContractError);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (int draw = 0; draw < 1000; ++draw) {
    std::vector<double> p(len(rng)), t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = g(rng);
      t[i] = g(rng);
    }
    auto r = metrics(p, t);
    CHECK(r.mse >= r.mae * r.mae * (1.0 - 1e-12));
  }
}

TEST_CASE("early stopping counter") {
  EarlyStopping es(5);
  const std::vector<double> losses{3, 2, 2.1, 2.2, 2.3, 2.4, 2.5};
  std::size_t stopped_after = 0;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    es.update(e + 1, losses[e]);
    if (es.should_stop()) {
      stopped_after = e + 1;
      break;
    }
  }
  CHECK(stopped_after == 7);
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_loss() == 2.0);

  EarlyStopping mono(5);
  std::size_t ran = 0;
  for (std::size_t e = 1; e <= 15 && !mono.should_stop(); ++e, ++ran) CHECK(mono.update(e, 10.0 - e));
  CHECK(ran == 15);
  CHECK(mono.best_epoch() == 15);

  EarlyStopping ties(2);
  ties.update(1, 1.0);
  CHECK_FALSE(ties.update(2, 1.0));
  CHECK_FALSE(ties.update(3, 1.0));
  CHECK(ties.should_stop());
  CHECK(ties.best_epoch() == 1);
}

TEST_CASE("training loop bookkeeping") {
  TempDir dir("train");
  auto prep = small_market(dir.path);
  const Dataset& ds = prep.dataset;
  RunConfig cfg;
  cfg.set("max_epochs", "6");
  cfg.set("patience", "2");
  Model model = fresh_model(cfg, ds);
  auto r = train(model, ds, cfg.train_config());

  const std::size_t per_epoch = (ds.train.size() + 3) / 4;
  REQUIRE_FALSE(r.history.empty());
  double running_best = INFINITY;
  for (const auto& e : r.history) {
    CHECK(e.steps == per_epoch * e.epoch);
    CHECK(e.improved == (e.val_mse < running_best));
    running_best = std::min(running_best, e.val_mse);
  }
  CHECK(r.steps == per_epoch * r.history.size());
  CHECK(r.best_val_mse == running_best);
  CHECK(r.history.at(r.best_epoch - 1).val_mse == r.best_val_mse);
  // Restored weights reproduce the best epoch exactly.
  CHECK(split_mse(model, ds, Split::val) == r.best_val_mse);
  const std::size_t n = r.history.size();
  const bool stale = n >= 2 && !r.history[n - 1].improved && !r.history[n - 2].improved;
  CHECK(r.stopped_early == stale);
  CHECK((r.stopped_early || n == 6));

  const std::string csv = r.history_csv();
  CHECK(csv.rfind("epoch,steps,train_loss,val_mse,improved\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.history.size() + 1));
}

TEST_CASE("training rejects bad setups and reports divergence") {
  auto ds = trend_dataset(8, 20, 1, 8);
  RunConfig cfg;
  Model model = fresh_model(cfg, ds);
  TrainConfig tc = cfg.train_config();

  Dataset no_val = ds;
  no_val.val.clear();
  CHECK_THROWS_AS(train(model, no_val, tc), ContractError);
  TrainConfig zero = tc;
  zero.batch = 0;
  CHECK_THROWS_AS(train(model, ds, zero), ContractError);

  model.params().assign({{"head.b", Tensor({1, 1}, NAN)}});
  try {
    train(model, ds, tc);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("head.b") != std::string::npos);
  }
}

TEST_CASE("linear trend is fitted within the default budget") {
  auto ds = trend_dataset(8, 20, 1, 8);
  REQUIRE(ds.train.size() == 8);
  RunConfig cfg;
  Model model = fresh_model(cfg, ds);
  auto r = train(model, ds, cfg.train_config());
  CHECK(r.history.size() <= 15);
  CHECK(split_mse(model, ds, Split::train) < 1e-3);
}

TEST_CASE("frozen tensors survive training and trainable ones move") {
  TempDir dir("frozen");
  auto prep = small_market(dir.path);
  const Dataset& ds = prep.dataset;
  RunConfig cfg;
  cfg.set("max_epochs", "25");
  cfg.set("patience", "25");
  cfg.set("max_steps", "50");
  Model model = fresh_model(cfg, ds);
  std::map<std::string, Tensor> before;
  for (const auto& id : model.params().ids()) before.emplace(id, model.params().at(id).value());
  auto r = train(model, ds, cfg.train_config());
  CHECK(r.steps == 50);
  for (const auto& id : model.params().ids()) {
    const bool same = model.params().at(id).value().bit_equal(before.at(id));
    if (model.params().is_frozen(id)) {
      CHECK_MESSAGE(same, id);
    } else {
      CHECK_MESSAGE(!same, id);
    }
  }
}

TEST_CASE("evaluate") {
  TempDir dir("eval");
  auto prep = small_market(dir.path);
  Dataset ds = prep.dataset;
  RunConfig cfg;
  Model model = fresh_model(cfg, ds);

  auto report = evaluate(model, ds);
  REQUIRE(report.stocks.size() == 2);
  double mae = 0, mse = 0;
  for (const auto& s : report.stocks) {
    mae += s.metrics.mae / 2.0;
    mse += s.metrics.mse / 2.0;
    CHECK(s.samples > 0);
  }
  CHECK(std::abs(report.average.mae - mae) <= 1e-12);
  CHECK(std::abs(report.average.mse - mse) <= 1e-12);
  CHECK(report.seed == 42);
  CHECK(evaluate(model, ds).to_csv() == report.to_csv());
  const std::string csv = report.to_csv();
  CHECK(csv.rfind("stock,MAE,MSE\nS01,", 0) == 0);
  CHECK(csv.find("\naverage,") != std::string::npos);

  // Targets replaced by the model's own forecasts give a perfect score.
  for (auto& s : ds.test) s.target = model.predict(model.input(ds, s));
  auto perfect = evaluate(model, ds);
  for (const auto& s : perfect.stocks) {
    CHECK(s.metrics.mae == 0.0);
    CHECK(s.metrics.mse == 0.0);
  }
  CHECK(perfect.average.mse == 0.0);

  auto rows = predictions(model, ds, Split::test);
  CHECK(rows.size() == ds.test.size());
  CHECK(rows.front().predicted == rows.front().actual);

  Model stranger(cfg.model_config(ds.dim));
  stranger.set_context("S01", Tensor::row(ds.stocks[0].name_embedding));
  CHECK_THROWS_AS(evaluate(stranger, ds), ContractError);
}

TEST_CASE("checkpoint round trip and refusal") {
  TempDir dir("ckpt");
  auto prep = small_market(dir.path / "data");
  const Dataset& ds = prep.dataset;
  RunConfig cfg;
  cfg.set("max_epochs", "2");
  cfg.set("patience", "2");
  const std::string hash = cfg.hash(prep.manifest.hash());
  Model model = fresh_model(cfg, ds);
  train(model, ds, cfg.train_config());
  const auto path = dir.path / "model.ckpt";
  save_checkpoint(path, model, hash);

  const std::string bytes = read_file(path);
  CHECK(bytes.substr(0, 8) == "SNFUSE01");
  CHECK(encode_checkpoint(model, hash) == bytes);
  auto decoded = decode_checkpoint(bytes);
  CHECK(decoded.config_hash == hash);
  CHECK(decoded.tensors.count("context/S01") == 1);
  CHECK(decoded.tensors.count("head.w") == 1);

  Model restored(cfg.model_config(ds.dim));
  load_checkpoint(path, restored, hash);
  CHECK(restored.contexts().size() == 2);
  for (const auto& s : ds.test) CHECK(restored.predict(restored.input(ds, s)) == model.predict(model.input(ds, s)));
  CHECK(encode_checkpoint(restored, hash) == bytes);

  Model other(cfg.model_config(ds.dim));
  CHECK_THROWS_AS(load_checkpoint(path, other, std::string(64, '0')), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint("NOTACKPT" + bytes.substr(8)), FormatError);

  RunConfig snp = cfg;
  snp.set("snp", "on");
  Model bigger(snp.model_config(ds.dim));
  CHECK_THROWS_AS(load_checkpoint(path, bigger, hash), FormatError);
  RunConfig wider = cfg;
  wider.set("d_model", "16");
  Model resized(wider.model_config(ds.dim));
  CHECK_THROWS_AS(load_checkpoint(path, resized, hash), FormatError);
}

TEST_CASE("training is deterministic") {
  TempDir dir("det");
  auto prep = small_market(dir.path);
  RunConfig cfg;
  cfg.set("max_epochs", "3");
  cfg.set("patience", "3");
  std::string first, report;
  for (int run = 0; run < 2; ++run) {
    Model m = fresh_model(cfg, prep.dataset);
    auto r = train(m, prep.dataset, cfg.train_config());
    const std::string bytes = encode_checkpoint(m, cfg.hash(prep.manifest.hash())) + r.history_csv();
    const std::string csv = evaluate(m, prep.dataset).to_csv();
    if (run == 0) {
      first = bytes;
      report = csv;
    } else {
      CHECK(bytes == first);
      CHECK(csv == report);
    }
  }
}
