#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "snf/config.hpp"
#include "snf/errors.hpp"
#include "snf/experiment.hpp"
#include "snf/io.hpp"
#include "snf/synth.hpp"

namespace snf::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::optional<std::string> pooling;
  std::optional<std::string> snp;
  std::optional<std::size_t> horizon;
  bool no_gcn = false, no_p2n = false, no_n2p = false;
  std::optional<std::uint64_t> seed;
  std::string seeds = "1,2,3";
  std::vector<std::string> sets;
  bool no_plot = false;
  MarketOptions market;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void add_config_options(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "key=value config file");
  app->add_option("--set", o.sets, "override one config key (key=value), repeatable");
  app->add_option("--pooling", o.pooling, "news pooling")->check(CLI::IsMember({"none", "ap", "cap", "sap", "pasap"}));
  app->add_option("--snp", o.snp, "stock name prompt")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--horizon", o.horizon, "forecast horizon")->check(CLI::IsMember({1, 5}));
  app->add_flag("--no-gcn", o.no_gcn, "disable the GCN fusion term");
  app->add_flag("--no-p2n", o.no_p2n, "disable price-to-news attention");
  app->add_flag("--no-n2p", o.no_n2p, "disable news-to-price attention");
  app->add_option("--seed", o.seed, "random seed");
}

void add_paths(CLI::App* app, Options& o, bool data, bool out) {
  if (data) app->add_option("--data", o.data, "data directory");
  if (out) app->add_option("--out", o.out, "output directory");
}

RunConfig effective_config(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig() : RunConfig::load(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.pooling) cfg.set("pooling", *o.pooling);
  if (o.snp) cfg.set("snp", *o.snp);
  if (o.horizon) cfg.set("horizon", std::to_string(*o.horizon));
  if (o.no_gcn) cfg.set("gcn", "off");
  if (o.no_p2n) cfg.set("p2n", "off");
  if (o.no_n2p) cfg.set("n2p", "off");
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (!o.data.empty()) cfg.set("data", o.data);
  if (!o.out.empty()) cfg.set("out", o.out);
  return cfg;
}

fs::path require_path(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw InputError(fmt::format("--{} is required (or set '{}' in the config)", key, key));
  return v;
}

std::string utc_now() {
  const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

/// Everything that varies between identical runs goes here.
class Sidecar {
 public:
  Sidecar(std::string command) : command_(std::move(command)), started_(utc_now()),
                                 clock_(std::chrono::steady_clock::now()) {}
  nlohmann::json& extra() { return extra_; }
  void write(const fs::path& dir) const {
    nlohmann::json j = extra_;
    j["command"] = command_;
    j["started"] = started_;
    j["finished"] = utc_now();
    j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
    write_file(dir / ("meta_" + command_ + ".json"), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string started_;
  std::chrono::steady_clock::time_point clock_;
  nlohmann::json extra_ = nlohmann::json::object();
};

void echo_config(const fs::path& out, const RunConfig& cfg) {
  fs::create_directories(out);
  write_file(out / "config.txt", cfg.to_text());
}

/// Prepares the data directory. With `verify_existing` and a manifest already
/// in the output directory, the data must reproduce that manifest exactly.
PreparedDataset obtain_dataset(const RunConfig& cfg, const fs::path& out, bool verify_existing) {
  const fs::path data = require_path(cfg, "data");
  const auto options = cfg.dataset_options();
  const fs::path manifest_path = out / "manifest.txt";
  if (verify_existing && fs::exists(manifest_path)) {
    Manifest stored = Manifest::parse(read_file(manifest_path));
    Dataset ds = load_dataset(data, stored, options);
    return {std::move(ds), std::move(stored)};
  }
  return prepare_dataset(data, options);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string tok = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(tok, &used));
      if (used != tok.size() || tok.empty() || tok.front() == '-') throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InputError("--seeds expects comma-separated non-negative integers, got '" + text + "'");
    }
    start = comma + 1;
  }
  return seeds;
}

std::string summary_line(const StockSummary& s) {
  return fmt::format("{}: {} days, split {}/{}/{}, windows {}/{}/{}, skipped {}", s.stock_id, s.days,
                     s.splits.train.size(), s.splits.val.size(), s.splits.test.size(), s.train_samples,
                     s.val_samples, s.test_samples, s.skipped);
}

int cmd_prepare(const Options& o, std::ostream& out) {
  Sidecar meta("prepare");
  RunConfig cfg = effective_config(o);
  const fs::path dir = require_path(cfg, "out");
  auto prep = prepare_dataset(require_path(cfg, "data"), cfg.dataset_options());
  echo_config(dir, cfg);
  write_file(dir / "manifest.txt", prep.manifest.serialize());
  for (const auto& s : prep.dataset.summaries) out << summary_line(s) << "\n";
  out << fmt::format("news days {}, unaligned {}\n", prep.dataset.news_days.size(), prep.dataset.unaligned_news_days);
  out << "manifest " << prep.manifest.hash() << "\n";
  meta.extra()["manifest_hash"] = prep.manifest.hash();
  meta.write(dir);
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  Sidecar meta("train");
  RunConfig cfg = effective_config(o);
  const fs::path dir = require_path(cfg, "out");
  auto prep = obtain_dataset(cfg, dir, false);
  echo_config(dir, cfg);
  write_file(dir / "manifest.txt", prep.manifest.serialize());
  const std::string hash = cfg.hash(prep.manifest.hash());
  Model model(cfg.model_config(prep.dataset.dim));
  model.set_contexts(prep.dataset.stocks);
  auto result = train(model, prep.dataset, cfg.train_config());
  save_checkpoint(dir / "model.ckpt", model, hash);
  write_file(dir / "history.csv", result.history_csv());
  out << fmt::format("trained {} epochs ({} steps), best epoch {} val MSE {}{}\n", result.history.size(),
                     result.steps, result.best_epoch, format_double(result.best_val_mse),
                     result.stopped_early ? ", stopped early" : "");
  out << "config hash " << hash << "\n";
  meta.extra()["config_hash"] = hash;
  meta.extra()["manifest_hash"] = prep.manifest.hash();
  meta.write(dir);
  return kExitOk;
}

struct Loaded {
  PreparedDataset prep;
  Model model;
  std::string hash;
};

Loaded load_trained(const Options& o, const RunConfig& cfg, const fs::path& dir) {
  auto prep = obtain_dataset(cfg, dir, true);
  const std::string hash = cfg.hash(prep.manifest.hash());
  Model model(cfg.model_config(prep.dataset.dim));
  const fs::path ckpt = o.checkpoint.empty() ? dir / "model.ckpt" : fs::path(o.checkpoint);
  load_checkpoint(ckpt, model, hash);
  return {std::move(prep), std::move(model), hash};
}

int cmd_eval(const Options& o, std::ostream& out) {
  Sidecar meta("eval");
  RunConfig cfg = effective_config(o);
  const fs::path dir = require_path(cfg, "out");
  auto loaded = load_trained(o, cfg, dir);
  auto report = evaluate(loaded.model, loaded.prep.dataset, Split::test);
  report.config_hash = loaded.hash;
  echo_config(dir, cfg);
  write_file(dir / "eval.csv", report.to_csv());
  out << report.to_csv();
  meta.extra()["config_hash"] = loaded.hash;
  meta.extra()["seed"] = report.seed;
  meta.write(dir);
  return kExitOk;
}

std::string svg_plot(const std::string& title, const std::vector<PredictionRow>& rows) {
  const double w = 640, h = 320, pad = 40;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : rows) {
    lo = std::min({lo, r.actual, r.predicted});
    hi = std::max({hi, r.actual, r.predicted});
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double n = static_cast<double>(std::max<std::size_t>(rows.size(), 2) - 1);
  auto line = [&](bool predicted) {
    std::string pts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = predicted ? rows[i].predicted : rows[i].actual;
      pts += fmt::format("{:.2f},{:.2f} ", pad + (w - 2 * pad) * static_cast<double>(i) / n,
                         h - pad - (h - 2 * pad) * (v - lo) / (hi - lo));
    }
    return pts;
  };
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{3}</text>\n",
      w, h, pad, title);
  svg += fmt::format("<polyline fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\" points=\"{}\"/>\n", line(false));
  svg += fmt::format("<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"{}\"/>\n", line(true));
  svg += fmt::format(
      "<text x=\"{0}\" y=\"{1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">actual</text>\n"
      "<text x=\"{2}\" y=\"{1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">predicted</text>\n"
      "</svg>\n",
      pad, h - 12, pad + 60);
  return svg;
}

int cmd_report(const Options& o, std::ostream& out) {
  Sidecar meta("report");
  RunConfig cfg = effective_config(o);
  const fs::path dir = require_path(cfg, "out");
  auto loaded = load_trained(o, cfg, dir);
  const auto rows = predictions(loaded.model, loaded.prep.dataset, Split::test);
  const fs::path rdir = dir / "report";
  fs::create_directories(rdir);
  for (const auto& stock : loaded.prep.dataset.stocks) {
    std::vector<PredictionRow> mine;
    std::string csv = "date,step,predicted,actual\n";
    for (const auto& r : rows) {
      if (r.stock_id != stock.stock_id) continue;
      csv += fmt::format("{},{},{},{}\n", format_date(r.date), r.step, format_double(r.predicted),
                         format_double(r.actual));
      if (r.step == 1) mine.push_back(r);
    }
    write_file(rdir / (stock.stock_id + ".csv"), csv);
    if (!o.no_plot && !mine.empty()) {
      try {
        write_file(rdir / (stock.stock_id + ".svg"), svg_plot(stock.stock_id + " test, step 1", mine));
      } catch (const std::exception& e) {
        out << "plot skipped for " << stock.stock_id << ": " << e.what() << "\n";
      }
    }
    out << fmt::format("{}: {} test rows\n", stock.stock_id, mine.size());
  }
  echo_config(dir, cfg);
  meta.extra()["config_hash"] = loaded.hash;
  meta.write(dir);
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  Sidecar meta("ablate");
  RunConfig cfg = effective_config(o);
  const fs::path dir = require_path(cfg, "out");
  auto prep = obtain_dataset(cfg, dir, false);
  echo_config(dir, cfg);
  write_file(dir / "manifest.txt", prep.manifest.serialize());
  auto rows = ablation_grid(cfg, prep.dataset, prep.manifest.hash());
  const std::string csv = ablation_csv(rows);
  write_file(dir / "ablation.csv", csv);
  out << csv;
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& r : rows) hashes[r.label] = r.config_hash;
  meta.extra()["config_hashes"] = hashes;
  meta.write(dir);
  return kExitOk;
}

int cmd_multiseed(const Options& o, std::ostream& out) {
  Sidecar meta("multiseed");
  RunConfig cfg = effective_config(o);
  const fs::path dir = require_path(cfg, "out");
  const auto seeds = parse_seeds(o.seeds);
  if (seeds.size() < 2) throw InputError("--seeds needs at least two seeds");
  auto prep = obtain_dataset(cfg, dir, false);
  echo_config(dir, cfg);
  write_file(dir / "manifest.txt", prep.manifest.serialize());
  auto result = multi_seed(cfg, prep.dataset, prep.manifest.hash(), seeds);
  const std::string csv = result.to_csv();
  write_file(dir / "seeds.csv", csv);
  out << csv;
  meta.extra()["seeds"] = seeds;
  meta.write(dir);
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  RunConfig cfg = effective_config(o);
  auto report = toy_gradient_check(cfg);
  for (const auto& p : report.params) {
    out << fmt::format("{:<28} entries {:>4}  max rel {:.3e}  max abs {:.3e}\n", p.id, p.entries, p.max_rel_error,
                       p.max_abs_error);
  }
  out << fmt::format("gradcheck {}: worst relative error {:.3e} at {} (tolerance {:.0e})\n",
                     report.passed() ? "PASS" : "FAIL", report.worst_rel_error, report.worst_id, report.tolerance);
  return report.passed() ? kExitOk : kExitRuntime;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw InputError("--out is required");
  MarketOptions m = o.market;
  if (o.seed) m.seed = *o.seed;
  write_market_dataset(o.out, m);
  out << fmt::format("wrote {} stocks x {} days (d={}) to {}\n", m.stocks, m.days, m.dim, o.out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stock-aware news fusion forecaster", "snfuse"};
  app.require_subcommand(1);
  Options o;

  auto* prepare = app.add_subcommand("prepare", "validate, scale, window and split a data directory");
  add_paths(prepare, o, true, true);
  add_config_options(prepare, o);

  auto* train = app.add_subcommand("train", "train and write model.ckpt and history.csv");
  add_paths(train, o, true, true);
  add_config_options(train, o);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split (eval.csv)");
  add_paths(eval, o, true, true);
  add_config_options(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint path (default OUT/model.ckpt)");

  auto* report = app.add_subcommand("report", "per-stock predicted-vs-actual CSV and SVG plots");
  add_paths(report, o, true, true);
  add_config_options(report, o);
  report->add_option("--checkpoint", o.checkpoint, "checkpoint path (default OUT/model.ckpt)");
  report->add_flag("--no-plot", o.no_plot, "skip the SVG files");

  auto* ablate = app.add_subcommand("ablate", "run the eight fusion ablations (ablation.csv)");
  add_paths(ablate, o, true, true);
  add_config_options(ablate, o);

  auto* multiseed = app.add_subcommand("multiseed", "mean and sample std over seeds (seeds.csv)");
  add_paths(multiseed, o, true, true);
  add_config_options(multiseed, o);
  multiseed->add_option("--seeds", o.seeds, "comma-separated seeds")->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check on a seeded toy instance");
  add_config_options(gradcheck, o);

  auto* synth = app.add_subcommand("synth", "write a synthetic multi-stock dataset");
  add_paths(synth, o, false, true);
  synth->add_option("--seed", o.seed, "random seed");
  synth->add_option("--stocks", o.market.stocks, "number of stocks")->capture_default_str();
  synth->add_option("--days", o.market.days, "trading days")->capture_default_str();
  synth->add_option("--dim", o.market.dim, "embedding dimension")->capture_default_str();
  synth->add_option("--empty-rate", o.market.empty_day_rate, "share of days without articles")
      ->check(CLI::Range(0.0, 1.0));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*prepare) return cmd_prepare(o, out);
    if (*train) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*report) return cmd_report(o, out);
    if (*ablate) return cmd_ablate(o, out);
    if (*multiseed) return cmd_multiseed(o, out);
    if (*gradcheck) return cmd_gradcheck(o, out);
    if (*synth) return cmd_synth(o, out);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ValueError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace snf::cli
