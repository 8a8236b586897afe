#include "snf/config.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "snf/errors.hpp"

namespace snf {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", KeyKind::count, "42", "global seed; every tensor draws from its own named substream"},
      {"window", KeyKind::count, "20", "input window T in trading days"},
      {"horizon", KeyKind::count, "1", "forecast horizon H (1 or 5)"},
      {"dim", KeyKind::count, "0", "embedding dimension d; 0 takes it from names.tsv"},
      {"pooling", KeyKind::choice, "sap", "none|ap|cap|sap|pasap"},
      {"snp", KeyKind::flag, "off", "prepend the stock-name prompt token"},
      {"gcn", KeyKind::flag, "on", "GCN + causal convolution blend term"},
      {"p2n", KeyKind::flag, "on", "price-to-news cross-attention blend term"},
      {"n2p", KeyKind::flag, "on", "news-to-price cross-attention blend term"},
      {"d_model", KeyKind::count, "32", "backbone width"},
      {"vocab_size", KeyKind::count, "128", "surrogate vocabulary rows V"},
      {"prototypes", KeyKind::count, "16", "reprogramming prototypes U"},
      {"patch_len", KeyKind::count, "5", "patch length in days"},
      {"stride", KeyKind::count, "5", "patch stride in days"},
      {"layers", KeyKind::count, "2", "frozen encoder blocks"},
      {"heads", KeyKind::count, "4", "self-attention heads per block"},
      {"ffn", KeyKind::count, "64", "feed-forward width per block"},
      {"reprogram_heads", KeyKind::count, "1", "heads of the reprogramming attention"},
      {"positional_len", KeyKind::count, "1024", "longest news day PA-SAP accepts"},
      {"qk_norm", KeyKind::flag, "on", "layer-normalise reprogramming queries and keys"},
      {"revin", KeyKind::flag, "on", "per-window reversible normalisation of the input closes"},
      {"vocab_file", KeyKind::path, "", "optional NEWSEMB1 file with V×d_model vocabulary rows"},
      {"lr", KeyKind::real, "0.01", "Adam learning rate"},
      {"beta1", KeyKind::real, "0.9", "Adam first-moment decay"},
      {"beta2", KeyKind::real, "0.999", "Adam second-moment decay"},
      {"eps", KeyKind::real, "1e-08", "Adam epsilon"},
      {"batch", KeyKind::count, "4", "samples per optimizer step"},
      {"max_epochs", KeyKind::count, "15", "epoch limit"},
      {"patience", KeyKind::count, "5", "epochs without validation improvement before stopping"},
      {"max_steps", KeyKind::count, "0", "optimizer step limit; 0 for none"},
      {"data", KeyKind::path, "", "data directory", false},
      {"out", KeyKind::path, "", "output directory", false},
  };
  return keys;
}

namespace {

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const ConfigKey* k = find_key(key);
  if (!k) throw FormatError("unknown config key '" + key + "'");
  std::string value(trim(raw));
  switch (k->kind) {
    case KeyKind::count: {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
        throw FormatError(fmt::format("config key '{}' needs a non-negative integer, got '{}'", key, value));
      }
      value = std::to_string(v);
      break;
    }
    case KeyKind::real: {
      auto v = parse_double(value);
      if (!v || !std::isfinite(*v) || *v < 0.0) {
        throw FormatError(fmt::format("config key '{}' needs a non-negative number, got '{}'", key, value));
      }
      value = format_double(*v);
      break;
    }
    case KeyKind::flag:
      if (value == "on" || value == "true" || value == "1") {
        value = "on";
      } else if (value == "off" || value == "false" || value == "0") {
        value = "off";
      } else {
        throw FormatError(fmt::format("config key '{}' needs on or off, got '{}'", key, value));
      }
      break;
    case KeyKind::choice:
      if (!parse_pooling(value)) {
        throw FormatError(fmt::format("config key '{}' must be none|ap|cap|sap|pasap, got '{}'", key, value));
      }
      break;
    case KeyKind::path: break;
  }
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  return it->second;
}

std::uint64_t RunConfig::count(const std::string& key) const { return std::stoull(get(key)); }
double RunConfig::real(const std::string& key) const { return *parse_double(get(key)); }
bool RunConfig::flag(const std::string& key) const { return get(key) == "on"; }

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(fmt::format("{}:{}: expected key=value", origin, lineno));
    const std::string key(trim(line.substr(0, eq)));
    try {
      cfg.set(key, std::string(line.substr(eq + 1)));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    if (find_key(k)->affects_hash) out += k + "=" + v + "\n";
  }
  return out;
}

std::string RunConfig::hash(const std::string& manifest_hash) const {
  return sha256_hex(canonical() + "manifest=" + manifest_hash + "\n");
}

DatasetOptions RunConfig::dataset_options() const {
  DatasetOptions o;
  o.window = count("window");
  o.horizon = count("horizon");
  o.use_news = get("pooling") != "none";
  return o;
}

ModelConfig RunConfig::model_config(std::size_t dim) const {
  const std::size_t wanted = count("dim");
  if (wanted != 0 && wanted != dim) {
    throw FormatError(fmt::format("config asks for d={} but the data has d={}", wanted, dim));
  }
  ModelConfig m;
  m.dim = dim;
  m.window = count("window");
  m.horizon = count("horizon");
  m.pooling = *parse_pooling(get("pooling"));
  m.snp = flag("snp");
  m.flags = {flag("gcn"), flag("p2n"), flag("n2p")};
  m.backbone.d_model = count("d_model");
  m.backbone.vocab_size = count("vocab_size");
  m.backbone.prototypes = count("prototypes");
  m.backbone.patch_len = count("patch_len");
  m.backbone.stride = count("stride");
  m.backbone.layers = count("layers");
  m.backbone.heads = count("heads");
  m.backbone.ffn = count("ffn");
  m.backbone.reprogram_heads = count("reprogram_heads");
  m.backbone.qk_norm = flag("qk_norm");
  m.positional_len = count("positional_len");
  m.revin = flag("revin");
  m.seed = count("seed");
  if (!get("vocab_file").empty()) m.vocab_file = get("vocab_file");
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.adam.lr = real("lr");
  t.adam.beta1 = real("beta1");
  t.adam.beta2 = real("beta2");
  t.adam.eps = real("eps");
  t.batch = count("batch");
  t.max_epochs = count("max_epochs");
  t.patience = count("patience");
  t.max_steps = count("max_steps");
  t.seed = count("seed");
  if (t.patience > t.max_epochs) {
    throw FormatError(fmt::format("patience {} exceeds max_epochs {}", t.patience, t.max_epochs));
  }
  return t;
}

}  // namespace snf
