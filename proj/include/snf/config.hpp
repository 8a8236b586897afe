#pragma once

// Flat key=value run configuration. Every key has a documented default;
// unknown keys and malformed values are rejected with FormatError.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "snf/dataset.hpp"
#include "snf/model.hpp"
#include "snf/training.hpp"

namespace snf {

enum class KeyKind { count, real, flag, choice, path };

struct ConfigKey {
  std::string name;
  KeyKind kind;
  std::string default_value;
  std::string help;
  bool affects_hash = true;  // paths do not
};

const std::vector<ConfigKey>& config_keys();

class RunConfig {
 public:
  RunConfig();  // all defaults

  static RunConfig parse(std::string_view text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Validates and normalises (flags become on/off).
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::uint64_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Every key, sorted, one `key=value` per line.
  std::string to_text() const;
  /// Lines of to_text() that influence results (paths excluded).
  std::string canonical() const;
  /// sha256 over canonical() and the dataset manifest hash.
  std::string hash(const std::string& manifest_hash) const;

  DatasetOptions dataset_options() const;
  ModelConfig model_config(std::size_t dim) const;
  TrainConfig train_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace snf
