#include <set>

#include "doctest.h"
#include "snf/config.hpp"
#include "snf/errors.hpp"
#include "snf/experiment.hpp"
#include "snf/io.hpp"
#include "snf/synth.hpp"
#include "support.hpp"

using namespace snf;
using namespace testing_support;

namespace {

PreparedDataset tiny_market(const std::filesystem::path& dir) {
  MarketOptions o;
  o.stocks = 2;
  o.days = 230;
  o.dim = 4;
  write_market_dataset(dir, o);
  return prepare_dataset(dir, {});
}

RunConfig quick_config() {
  RunConfig cfg;
  cfg.set("max_epochs", "1");
  cfg.set("patience", "1");
  return cfg;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  RunConfig cfg;
  CHECK(cfg.real("lr") == 0.01);
  CHECK(cfg.count("batch") == 4);
  CHECK(cfg.count("max_epochs") == 15);
  CHECK(cfg.count("patience") == 5);
  CHECK(cfg.count("window") == 20);
  CHECK(cfg.get("pooling") == "sap");
  CHECK_FALSE(cfg.flag("snp"));
  for (const auto& k : config_keys()) {
    CHECK_MESSAGE(!k.help.empty(), k.name);
    CHECK(cfg.get(k.name) == RunConfig().get(k.name));
  }

  CHECK_THROWS_AS(cfg.set("learning_rate", "0.1"), FormatError);
  CHECK_THROWS_AS(cfg.set("batch", "four"), FormatError);
  CHECK_THROWS_AS(cfg.set("batch", "-1"), FormatError);
  CHECK_THROWS_AS(cfg.set("lr", "nan"), FormatError);
  CHECK_THROWS_AS(cfg.set("snp", "maybe"), FormatError);
  CHECK_THROWS_AS(cfg.set("pooling", "max"), FormatError);
  cfg.set("snp", "true");
  CHECK(cfg.get("snp") == "on");
  cfg.set("lr", "1e-2");
  CHECK(cfg.get("lr") == RunConfig().get("lr"));

  RunConfig bad;
  bad.set("patience", "20");
  CHECK_THROWS_AS(bad.train_config(), FormatError);
  RunConfig dim;
  dim.set("dim", "16");
  CHECK_THROWS_AS(dim.model_config(8), FormatError);
  CHECK(dim.model_config(16).dim == 16);
}

TEST_CASE("config text round trip and hashing") {
  auto cfg = RunConfig::parse("# comment\n\npooling = cap\nsnp=on\r\nseed=7\n", "run.cfg");
  CHECK(cfg.get("pooling") == "cap");
  CHECK(cfg.flag("snp"));
  CHECK(RunConfig::parse(cfg.to_text()).to_text() == cfg.to_text());

  try {
    RunConfig::parse("seed=1\nbogus=2\n", "run.cfg");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::parse("seed\n"), FormatError);

  RunConfig a, b;
  b.set("data", "/somewhere/else");
  b.set("out", "/tmp/out");
  CHECK(a.hash("m") == b.hash("m"));
  CHECK(a.hash("m") != a.hash("n"));
  b.set("seed", "43");
  CHECK(a.hash("m") != b.hash("m"));
  CHECK(a.hash("m").size() == 64);
  CHECK(a.canonical().find("data=") == std::string::npos);
  CHECK(a.to_text().find("data=") != std::string::npos);

  RunConfig none;
  none.set("pooling", "none");
  CHECK_FALSE(none.dataset_options().use_news);
  CHECK(a.dataset_options().use_news);
}

TEST_CASE("synthetic market files are deterministic and loadable") {
  TempDir one("mk1"), two("mk2");
  MarketOptions o;
  o.stocks = 2;
  o.days = 40;
  o.dim = 3;
  o.empty_day_rate = 0.3;
  write_market_dataset(one.path, o);
  write_market_dataset(two.path, o);
  CHECK(read_file(one.path / "S01" / "prices.csv") == read_file(two.path / "S01" / "prices.csv"));
  CHECK(read_file(one.path / "names.tsv") == read_file(two.path / "names.tsv"));
  auto names = load_names(one.path / "names.tsv");
  REQUIRE(names.size() == 2);
  CHECK(names[1].stock_id == "S02");
  auto prices = load_prices(one.path / "S02" / "prices.csv");
  CHECK(prices.points.size() == 40);
  std::size_t empty = 0;
  for (const auto& entry : std::filesystem::directory_iterator(one.path / "news")) {
    auto day = load_news_day(entry.path());
    CHECK(day.dim == 3);
    empty += day.count == 0;
  }
  CHECK(empty > 0);
  CHECK(empty < 40);

  o.seed = 8;
  TempDir three("mk3");
  write_market_dataset(three.path, o);
  CHECK(read_file(one.path / "S01" / "prices.csv") != read_file(three.path / "S01" / "prices.csv"));
}

TEST_CASE("trend fixture") {
  auto ds = trend_dataset(8, 20, 1, 8);
  CHECK(ds.train.size() == 8);
  CHECK(ds.val.size() == 8);
  CHECK(ds.test.size() == 8);
  CHECK(ds.train[0].target.size() == 1);
  // Equal steps in normalized space.
  const auto& w = ds.train[0].window;
  for (std::size_t t = 1; t < w.size(); ++t) CHECK(w[t] - w[t - 1] == doctest::Approx(w[1] - w[0]));
  CHECK(ds.train[1].window[0] == doctest::Approx(w[1]));
}

TEST_CASE("sample statistics") {
  auto s = mean_std({1, 2, 3});
  CHECK(s.mean == 2.0);
  CHECK(s.std == 1.0);
  auto flat = mean_std({0.25, 0.25, 0.25});
  CHECK(flat.std == 0.0);
  CHECK_THROWS_AS(mean_std({1.0}), ContractError);
}

TEST_CASE("ablation specs") {
  const auto& specs = ablation_specs();
  REQUIRE(specs.size() == 8);
  const std::vector<std::string> labels{"+SAP",        "- GCN",       "- P2N",       "- N2P",
                                        "- P2N - N2P", "- N2P - GCN", "- P2N - GCN", "- P2N - N2P - GCN"};
  std::set<std::tuple<bool, bool, bool>> distinct;
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(specs[i].label == labels[i]);
    const auto& f = specs[i].flags;
    CHECK(f.gcn == (specs[i].label.find("GCN") == std::string::npos));
    CHECK(f.p2n == (specs[i].label.find("P2N") == std::string::npos));
    CHECK(f.n2p == (specs[i].label.find("N2P") == std::string::npos));
    distinct.insert({f.gcn, f.p2n, f.n2p});
  }
  CHECK(distinct.size() == 8);
  CHECK(active_terms(true, specs.front().flags).size() == 5);
  CHECK(active_terms(true, specs.back().flags).size() == 2);
}

TEST_CASE("ablation grid and multi-seed runs") {
  TempDir dir("grid");
  auto prep = tiny_market(dir.path);
  const std::string mh = prep.manifest.hash();
  RunConfig cfg = quick_config();

  auto rows = ablation_grid(cfg, prep.dataset, mh);
  REQUIRE(rows.size() == 8);
  std::set<std::string> hashes;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].label == ablation_specs()[i].label);
    CHECK(rows[i].report.stocks.size() == 2);
    hashes.insert(rows[i].config_hash);
    RunConfig expect = cfg;
    expect.set("gcn", rows[i].flags.gcn ? "on" : "off");
    expect.set("p2n", rows[i].flags.p2n ? "on" : "off");
    expect.set("n2p", rows[i].flags.n2p ? "on" : "off");
    CHECK(rows[i].config_hash == expect.hash(mh));
  }
  CHECK(hashes.size() == 8);
  CHECK(rows[0].active_terms == 5);
  CHECK(rows[7].active_terms == 2);
  const std::string csv = ablation_csv(rows);
  CHECK(csv.rfind("method,active_terms,MAE,MSE\n+SAP,5,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  CHECK_THROWS_AS(multi_seed(cfg, prep.dataset, mh, {1}), ContractError);
  auto ms = multi_seed(cfg, prep.dataset, mh, {1, 2, 3});
  CHECK(ms.reports.size() == 3);
  REQUIRE(ms.rows.size() == 3);
  CHECK(ms.rows.back().stock_id == "average");
  CHECK(ms.rows.back().mse.std > 0.0);
  const std::string seeds_csv = ms.to_csv();
  CHECK(seeds_csv.find("MAE,S01,") != std::string::npos);
  CHECK(seeds_csv.find("MSE,average,") != std::string::npos);
  CHECK(seeds_csv.find("MAE,average") < seeds_csv.find("MSE,S01"));

  auto same = multi_seed(cfg, prep.dataset, mh, {5, 5});
  CHECK(same.rows.back().mae.std == 0.0);
  CHECK(same.rows.back().mse.std == 0.0);
}
