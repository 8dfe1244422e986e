#include "mate/params.hpp"

#include <cmath>
#include <fstream>

#include "mate/errors.hpp"

namespace mate {

namespace {
constexpr int kCheckpointVersion = 1;
}

ParamStore::ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

ParamId ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  if (!init.all_finite()) throw NumericError("non-finite initial value for parameter " + name);
  const ParamId id = values_.size();
  names_.push_back(name);
  values_.push_back(std::move(init));
  index_.emplace(name, id);
  return id;
}

ParamId ParamStore::add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w(Shape{fan_in, fan_out});
  for (auto& v : w.data()) v = dist(rng_);
  return add(name, std::move(w));
}

ParamId ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(std::move(shape)));
}

std::size_t ParamStore::num_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamId ParamStore::id(const std::string& name) const {
  auto found = find(name);
  if (!found) throw ConfigError("unknown parameter: " + name);
  return *found;
}

void ParamStore::assign(const ParamStore& other) {
  if (other.size() != size()) {
    throw IoError("parameter count mismatch: expected " + std::to_string(size()) + ", got " +
                  std::to_string(other.size()));
  }
  for (ParamId id = 0; id < size(); ++id) {
    auto found = other.find(names_[id]);
    if (!found) throw IoError("missing parameter: " + names_[id]);
    const Tensor& src = other.value(*found);
    if (src.shape() != values_[id].shape()) {
      throw IoError("shape mismatch for " + names_[id] + ": expected " +
                    shape_str(values_[id].shape()) + ", got " + shape_str(src.shape()));
    }
    values_[id] = src;
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta) {
  nlohmann::json doc;
  doc["format"] = "mate-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["meta"] = meta;
  doc["seed"] = params.seed();
  auto& list = doc["params"] = nlohmann::json::array();
  for (ParamId id = 0; id < params.size(); ++id) {
    const Tensor& t = params.value(id);
    list.push_back({{"name", params.name(id)}, {"shape", t.shape()}, {"data", t.storage()}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
    if (doc.at("format").get<std::string>() != "mate-checkpoint") {
      throw IoError("not a checkpoint file: " + path.string());
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version in " + path.string());
    }
    Checkpoint ck{ParamStore(doc.value("seed", std::uint64_t{0})), doc.value("meta", nlohmann::json::object())};
    for (const auto& entry : doc.at("params")) {
      Shape shape = entry.at("shape").get<Shape>();
      std::vector<double> data = entry.at("data").get<std::vector<double>>();
      ck.params.add(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupted checkpoint " + path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw IoError("corrupted checkpoint " + path.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw IoError("corrupted checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace mate
