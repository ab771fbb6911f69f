#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/manifest.hpp"
#include "mmcast/model.hpp"
#include "mmcast/pipeline.hpp"
#include "mmcast/trainer.hpp"

namespace mmcast {

/// Bad configuration: unknown key, wrong type, missing required field.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ValueType { Int, UInt, Double, Bool, String, OptionalInt };

struct ConfigKey {
  std::string key;
  ValueType type;
  std::optional<std::string> default_value;  // nullopt: required
  std::string help;
};

/// Every accepted key with its type and default.
const std::vector<ConfigKey>& config_schema();

/// Flat `key = value` run configuration, validated against config_schema()
/// and resolved against its defaults.
class RunConfig {
 public:
  /// `seed_override` replaces (or supplies) the seed before validation.
  static RunConfig parse(const std::string& text, const std::string& source = "<config>",
                         std::optional<std::uint64_t> seed_override = {});
  static RunConfig load(const std::filesystem::path& path,
                        std::optional<std::uint64_t> seed_override = {});
  /// All defaults plus the given seed.
  static RunConfig defaults(std::uint64_t seed);

  void set(const std::string& key, const std::string& value);
  void override_seed(std::uint64_t seed) { set("seed", std::to_string(seed)); }

  const std::string& raw(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::optional<int> get_optional_int(const std::string& key) const;

  std::uint64_t seed() const { return get_uint("seed"); }

  SimParams sim_params() const;
  std::int64_t sim_steps() const { return get_int("sim.n_steps"); }
  std::array<double, 3> split_fractions() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  AblationConfig ablation_config() const;

  /// Fully resolved configuration, one `config.<key>` entry per schema key.
  Manifest to_manifest() const;
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> values_;  // schema order
};

}  // namespace mmcast
