#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/tensor.hpp"

namespace mate {

using ParamId = std::size_t;

/// Named, ordered collection of trainable tensors. Names are hierarchical
/// paths such as "decoder/gru/W_in"; each is registered exactly once.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0);

  ParamId add(const std::string& name, Tensor init);
  /// Glorot-uniform [fan_in][fan_out] weight drawn from the store's RNG.
  ParamId add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out);
  ParamId add_zeros(const std::string& name, Shape shape);

  std::size_t size() const { return values_.size(); }
  std::size_t num_elements() const;
  const std::string& name(ParamId id) const { return names_[id]; }
  const std::vector<std::string>& names() const { return names_; }
  const Tensor& value(ParamId id) const { return values_[id]; }
  Tensor& value(ParamId id) { return values_[id]; }

  std::optional<ParamId> find(const std::string& name) const;
  ParamId id(const std::string& name) const;

  std::uint64_t seed() const { return seed_; }

  /// Replace every value with the same-named entry of `other`. Names and
  /// shapes must match exactly.
  void assign(const ParamStore& other);

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, ParamId> index_;
};

/// Checkpoint file: JSON document
///   {"format":"mate-checkpoint","version":1,"meta":{...},
///    "params":[{"name":..,"shape":[..],"data":[..]},...]}
/// Doubles are written in shortest round-trip form, so reloading is bit-exact.
struct Checkpoint {
  ParamStore params;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mate
