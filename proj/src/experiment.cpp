#include "snf/experiment.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snf/errors.hpp"
#include "snf/io.hpp"
#include "snf/params.hpp"

namespace snf {

RunOutcome run_experiment(const RunConfig& config, const Dataset& dataset, const std::string& manifest_hash,
                          Split split) {
  RunOutcome out{Model(config.model_config(dataset.dim)), {}, {}, config.hash(manifest_hash)};
  out.model.set_contexts(dataset.stocks);
  out.training = train(out.model, dataset, config.train_config());
  out.report = evaluate(out.model, dataset, split);
  out.report.config_hash = out.config_hash;
  return out;
}

const std::vector<AblationSpec>& ablation_specs() {
  static const std::vector<AblationSpec> specs = {
      {"+SAP", {true, true, true}},
      {"- GCN", {false, true, true}},
      {"- P2N", {true, false, true}},
      {"- N2P", {true, true, false}},
      {"- P2N - N2P", {true, false, false}},
      {"- N2P - GCN", {false, true, false}},
      {"- P2N - GCN", {false, false, true}},
      {"- P2N - N2P - GCN", {false, false, false}},
  };
  return specs;
}

std::vector<AblationRow> ablation_grid(const RunConfig& base, const Dataset& dataset,
                                       const std::string& manifest_hash) {
  std::vector<AblationRow> rows;
  for (const auto& spec : ablation_specs()) {
    RunConfig cfg = base;
    cfg.set("gcn", spec.flags.gcn ? "on" : "off");
    cfg.set("p2n", spec.flags.p2n ? "on" : "off");
    cfg.set("n2p", spec.flags.n2p ? "on" : "off");
    const bool news = parse_pooling(cfg.get("pooling")) != PoolingVariant::none;
    auto run = run_experiment(cfg, dataset, manifest_hash);
    rows.push_back({spec.label, spec.flags, active_terms(news, spec.flags).size(), run.config_hash,
                    std::move(run.report)});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "method,active_terms,MAE,MSE\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{}\n", r.label, r.active_terms, format_double(r.report.average.mae),
                       format_double(r.report.average.mse));
  }
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.size() < 2) throw ContractError("sample standard deviation needs at least two values");
  const double k = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= k;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (k - 1.0))};
}

std::string MultiSeedResult::to_csv() const {
  std::string out = "metric,stock,mean,std\n";
  for (const char* metric : {"MAE", "MSE"}) {
    const bool mae = metric[1] == 'A';
    for (const auto& r : rows) {
      const MeanStd& m = mae ? r.mae : r.mse;
      out += fmt::format("{},{},{},{}\n", metric, r.stock_id, format_double(m.mean), format_double(m.std));
    }
  }
  return out;
}

MultiSeedResult multi_seed(const RunConfig& base, const Dataset& dataset, const std::string& manifest_hash,
                           const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 2) throw ContractError(fmt::format("multi_seed needs at least 2 seeds, got {}", seeds.size()));
  MultiSeedResult result;
  result.seeds = seeds;
  for (auto seed : seeds) {
    RunConfig cfg = base;
    cfg.set("seed", std::to_string(seed));
    result.reports.push_back(run_experiment(cfg, dataset, manifest_hash).report);
  }
  const auto& first = result.reports.front().stocks;
  for (std::size_t s = 0; s <= first.size(); ++s) {
    std::vector<double> mae, mse;
    for (const auto& r : result.reports) {
      const Metrics& m = s < first.size() ? r.stocks.at(s).metrics : r.average;
      mae.push_back(m.mae);
      mse.push_back(m.mse);
    }
    result.rows.push_back({s < first.size() ? first[s].stock_id : "average", mean_std(mae), mean_std(mse)});
  }
  return result;
}

GradCheckReport toy_gradient_check(const RunConfig& config) {
  ModelConfig m = config.model_config(4);
  m.window = 6;
  m.backbone.d_model = 8;
  m.backbone.vocab_size = 16;
  m.backbone.prototypes = 4;
  m.backbone.patch_len = 3;
  m.backbone.stride = 3;
  m.backbone.heads = 2;
  m.backbone.ffn = 8;
  m.backbone.reprogram_heads = 1;
  m.positional_len = 8;
  m.vocab_file.reset();
  Model model(m);

  SampleInput in;
  in.closes = gaussian(m.seed, "gradcheck/closes", {m.window, 1}, 1.0);
  in.name = gaussian(m.seed, "gradcheck/name", {1, m.dim}, 1.0);
  for (std::size_t t = 0; t < m.window; ++t) {
    const std::size_t n = t % 4;
    if (n == 0) {
      in.news.emplace_back(std::nullopt);
    } else {
      in.news.emplace_back(gaussian(m.seed, fmt::format("gradcheck/news{}", t), {n, m.dim}, 1.0));
    }
  }
  const Var target = Var::constant(gaussian(m.seed, "gradcheck/target", {1, m.horizon}, 1.0));
  auto loss = [&](ParamSet&) { return mse_loss(model.forward(in), target); };
  return finite_diff_check(loss, model.params());
}

}  // namespace snf
