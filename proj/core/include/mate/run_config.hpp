#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mate/model.hpp"
#include "mate/sim_charged.hpp"
#include "mate/sim_socialnav.hpp"
#include "mate/trainer.hpp"

namespace mate {

/// Flat text configuration: one `section.key = value` per line, `#` starts a
/// comment. Every key must exist in the defaults; values are typed after the
/// default they replace.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);

  /// Parses and assigns one value. Throws ConfigError for unknown keys or
  /// values that do not parse as the key's type.
  void set(const std::string& key, const std::string& value);
  /// "key=value" form used by --set.
  void set_assignment(const std::string& assignment);
  void merge_text(const std::string& text);

  bool has(const std::string& key) const;
  const nlohmann::json& get(const std::string& key) const;

  /// Effective configuration in the same text format, keys sorted.
  std::string dump() const;
  const nlohmann::json& values() const { return values_; }

  ModelConfig model() const;
  TrainConfig train() const;
  sim::ChargedConfig charged() const;
  sim::SocialnavConfig socialnav() const;
  std::array<double, 3> split_ratios() const;
  std::uint64_t split_seed() const;

 private:
  nlohmann::json values_;
};

}  // namespace mate
