#include "snf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "snf/errors.hpp"

namespace snf {

Var mse_loss(const Var& pred, const Var& target) {
  if (!pred.value().same_shape(target.value())) {
    throw ContractError(fmt::format("mse_loss: prediction {} vs target {}", shape_string(pred.value().shape()),
                                    shape_string(target.value().shape())));
  }
  return ops::mean(ops::square(pred - target));
}

Metrics metrics(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty()) throw ContractError("metrics: empty input");
  if (pred.size() != target.size()) throw ContractError("metrics: length mismatch");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    abs_sum += std::fabs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(pred.size());
  return {abs_sum / n, sq_sum / n};
}

bool EarlyStopping::update(std::size_t epoch, double loss) {
  if (best_epoch_ == 0 || loss < best_) {
    best_ = loss;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

std::string TrainResult::history_csv() const {
  std::string out = "epoch,steps,train_loss,val_mse,improved\n";
  for (const auto& r : history) {
    out += fmt::format("{},{},{},{},{}\n", r.epoch, r.steps, format_double(r.train_loss), format_double(r.val_mse),
                       r.improved ? 1 : 0);
  }
  return out;
}

namespace {

std::vector<SampleInput> inputs_for(const Model& model, const Dataset& ds, Split split) {
  std::vector<SampleInput> out;
  for (const auto& s : ds.split(split)) out.push_back(model.input(ds, s));
  return out;
}

double inputs_mse(const Model& model, const std::vector<SampleInput>& inputs) {
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& in : inputs) {
    const auto p = model.predict(in);
    for (std::size_t h = 0; h < p.size(); ++h) {
      const double d = p[h] - in.target[h];
      sq += d * d;
      ++n;
    }
  }
  return sq / static_cast<double>(n);
}

[[noreturn]] void diverged(const ParamSet& params, const GradMap* grads, std::size_t epoch, std::size_t step) {
  for (const auto& id : params.trainable_ids()) {
    if (!params.at(id).value().all_finite()) {
      throw NumericError(fmt::format("training diverged at epoch {} step {}: parameter '{}' is non-finite", epoch,
                                     step, id));
    }
  }
  if (grads) {
    for (const auto& [id, g] : *grads) {
      if (!g.all_finite()) {
        throw NumericError(fmt::format("training diverged at epoch {} step {}: gradient of '{}' is non-finite", epoch,
                                       step, id));
      }
    }
  }
  throw NumericError(fmt::format("training diverged at epoch {} step {}: loss is non-finite", epoch, step));
}

}  // namespace

TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& config) {
  if (dataset.train.empty()) throw ContractError("train: the train split has no samples");
  if (dataset.val.empty()) throw ContractError("train: the val split has no samples");
  if (config.batch == 0 || config.max_epochs == 0 || config.patience == 0) {
    throw ContractError("train: batch, max_epochs and patience must be positive");
  }
  ParamSet& params = model.params();
  const auto train_inputs = inputs_for(model, dataset, Split::train);
  const auto val_inputs = inputs_for(model, dataset, Split::val);

  OptimState state = make_adam_state(params, config.adam);
  EarlyStopping stopper(config.patience);
  std::map<std::string, Tensor> best;
  TrainResult result;
  std::vector<std::size_t> order(train_inputs.size());
  std::iota(order.begin(), order.end(), 0);
  bool step_limit = false;

  for (std::size_t epoch = 1; epoch <= config.max_epochs && !step_limit; ++epoch) {
    auto rng = substream(config.seed, fmt::format("shuffle/epoch{}", epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::vector<Var> preds;
      std::vector<double> targets;
      for (std::size_t i = start; i < end; ++i) {
        const auto& in = train_inputs[order[i]];
        preds.push_back(model.forward(in));
        targets.insert(targets.end(), in.target.begin(), in.target.end());
      }
      Var stacked = ops::concat_rows(preds);
      Var loss = mse_loss(stacked, Var::constant(Tensor(stacked.value().shape(), targets)));
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) diverged(params, nullptr, epoch, result.steps + 1);
      GradMap grads = backward(loss, params);
      for (const auto& [id, g] : grads)
        if (!g.all_finite()) diverged(params, &grads, epoch, result.steps + 1);
      adam_step(params, grads, state);
      ++result.steps;
      loss_sum += lv * static_cast<double>(end - start);
      seen += end - start;
      if (config.max_steps && result.steps >= config.max_steps) {
        step_limit = true;
        break;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = result.steps;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_mse = inputs_mse(model, val_inputs);
    if (!std::isfinite(rec.val_mse)) diverged(params, nullptr, epoch, result.steps);
    rec.improved = stopper.update(epoch, rec.val_mse);
    if (rec.improved) {
      best.clear();
      for (const auto& id : params.trainable_ids()) best.emplace(id, params.at(id).value());
    }
    result.history.push_back(rec);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  params.assign(best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_mse = stopper.best_loss();
  return result;
}

double split_mse(const Model& model, const Dataset& dataset, Split split) {
  const auto inputs = inputs_for(model, dataset, split);
  if (inputs.empty()) throw ContractError(fmt::format("split_mse: {} split is empty", split_name(split)));
  return inputs_mse(model, inputs);
}

std::string EvalReport::to_csv() const {
  std::string out = "stock,MAE,MSE\n";
  for (const auto& s : stocks) {
    out += fmt::format("{},{},{}\n", s.stock_id, format_double(s.metrics.mae), format_double(s.metrics.mse));
  }
  out += fmt::format("average,{},{}\n", format_double(average.mae), format_double(average.mse));
  return out;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, Split split) {
  EvalReport report;
  report.seed = model.config().seed;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_stock;
  for (const auto& s : dataset.split(split)) {
    const auto in = model.input(dataset, s);
    auto& [pred, target] = per_stock[s.stock_id];
    const auto p = model.predict(in);
    pred.insert(pred.end(), p.begin(), p.end());
    target.insert(target.end(), in.target.begin(), in.target.end());
  }
  if (per_stock.empty()) throw ContractError(fmt::format("evaluate: {} split is empty", split_name(split)));
  for (const auto& ctx : dataset.stocks) {
    auto it = per_stock.find(ctx.stock_id);
    if (it == per_stock.end()) continue;
    StockMetrics m;
    m.stock_id = ctx.stock_id;
    m.samples = it->second.first.size();
    m.metrics = metrics(it->second.first, it->second.second);
    report.stocks.push_back(m);
  }
  for (const auto& s : report.stocks) {
    report.average.mae += s.metrics.mae;
    report.average.mse += s.metrics.mse;
  }
  report.average.mae /= static_cast<double>(report.stocks.size());
  report.average.mse /= static_cast<double>(report.stocks.size());
  return report;
}

std::vector<PredictionRow> predictions(const Model& model, const Dataset& dataset, Split split) {
  std::vector<PredictionRow> rows;
  for (const auto& s : dataset.split(split)) {
    const auto p = model.predict(model.input(dataset, s));
    for (std::size_t h = 0; h < p.size(); ++h) rows.push_back({s.stock_id, s.target_dates[h], h + 1, p[h], s.target[h]});
  }
  return rows;
}

// --------------------------------------------------------------------------

namespace {

std::string hex_to_bytes(const std::string& hex) {
  if (hex.size() != 64) throw ContractError("config hash must be 64 hex characters");
  std::string out;
  for (std::size_t i = 0; i < 64; i += 2) out.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  return out;
}

std::string bytes_to_hex(std::string_view bytes) {
  std::string out;
  for (unsigned char c : bytes) out += fmt::format("{:02x}", c);
  return out;
}

}  // namespace

std::string encode_checkpoint(const Model& model, const std::string& config_hash) {
  std::map<std::string, Tensor> tensors = model.params().values();
  for (const auto& [id, t] : model.contexts()) tensors.emplace("context/" + id, t);
  std::string out(kCheckpointMagic);
  out += hex_to_bytes(config_hash);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [id, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(out, e);
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& config_hash) {
  write_file(path, encode_checkpoint(model, config_hash));
}

CheckpointData decode_checkpoint(std::string_view bytes, const std::string& origin) {
  ByteReader in(bytes);
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic || !in.ok()) {
    throw FormatError(origin + ": not a checkpoint (bad magic)");
  }
  CheckpointData data;
  data.config_hash = bytes_to_hex(in.take(32));
  const std::uint32_t count = in.u32();
  if (!in.ok()) throw FormatError(origin + ": truncated header");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = in.offset();
    const std::uint32_t len = in.u32();
    std::string id(in.take(len));
    const std::uint32_t rank = in.u32();
    if (!in.ok() || rank == 0 || rank > 8) {
      throw FormatError(fmt::format("{}: corrupt tensor header at offset {}", origin, at));
    }
    std::vector<std::size_t> shape;
    std::uint64_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint64_t e = in.u64();
      if (e == 0 || e > (1ull << 32)) throw FormatError(fmt::format("{}: bad extent for '{}'", origin, id));
      shape.push_back(static_cast<std::size_t>(e));
      total *= e;
    }
    if (!in.ok() || in.remaining() < total * 8) {
      throw FormatError(fmt::format("{}: truncated payload for '{}' at offset {}", origin, id, in.offset()));
    }
    std::vector<double> values(static_cast<std::size_t>(total));
    for (double& v : values) v = in.f64();
    if (!data.tensors.emplace(id, Tensor(std::move(shape), std::move(values))).second) {
      throw FormatError(fmt::format("{}: duplicate tensor '{}'", origin, id));
    }
  }
  if (in.remaining() != 0) throw FormatError(fmt::format("{}: {} trailing bytes", origin, in.remaining()));
  return data;
}

void load_checkpoint(const std::filesystem::path& path, Model& model, const std::string& expected_hash) {
  const CheckpointData data = decode_checkpoint(read_file(path), path.string());
  if (data.config_hash != expected_hash) {
    throw FormatError(fmt::format("{}: checkpoint was written for config/dataset {} but the current one is {}",
                                  path.string(), data.config_hash.substr(0, 12), expected_hash.substr(0, 12)));
  }
  std::map<std::string, Tensor> values;
  for (const auto& [id, t] : data.tensors) {
    if (id.rfind("context/", 0) == 0) {
      model.set_context(id.substr(8), t);
      continue;
    }
    if (!model.params().contains(id)) throw FormatError(fmt::format("{}: unexpected tensor '{}'", path.string(), id));
    if (!model.params().at(id).value().same_shape(t)) {
      throw FormatError(fmt::format("{}: tensor '{}' has shape {}, model expects {}", path.string(), id,
                                    shape_string(t.shape()), shape_string(model.params().at(id).value().shape())));
    }
    values.emplace(id, t);
  }
  for (const auto& id : model.params().ids()) {
    if (!values.contains(id)) throw FormatError(fmt::format("{}: missing tensor '{}'", path.string(), id));
  }
  model.params().assign(values);
}

}  // namespace snf
