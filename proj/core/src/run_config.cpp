#include "mate/run_config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mate/errors.hpp"

namespace mate {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
    throw ConfigError("config key '" + key + "' is not of the form section.name");
  }
  return {key.substr(0, dot), key.substr(dot + 1)};
}

nlohmann::json parse_like(const nlohmann::json& like, const std::string& key, const std::string& text) {
  auto bad = [&] { return ConfigError("config key '" + key + "': cannot parse '" + text + "'"); };
  if (like.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw bad();
  }
  if (like.is_number_unsigned() || like.is_number_integer()) {
    if (text.empty() || text[0] == '-') throw bad();
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (errno != 0 || *end != '\0') throw bad();
    return v;
  }
  if (like.is_number_float()) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || *end != '\0') throw bad();
    return v;
  }
  return text;
}

std::string render(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  return v.dump();
}

}  // namespace

RunConfig::RunConfig() {
  const ModelConfig m;
  values_["model"] = {{"hidden_size", m.encoder.hidden_size},
                      {"edge_types", m.encoder.num_edge_types},
                      {"energy_dim", m.decoder.energy_dim},
                      {"t_obs", m.decoder.t_obs},
                      {"t_pred", m.decoder.t_pred},
                      {"dt", m.decoder.dt},
                      {"gamma", m.decoder.gamma},
                      {"beta", m.decoder.beta},
                      {"alpha", m.decoder.alpha},
                      {"fd_step_x", m.decoder.fd_step_x},
                      {"fd_step_v", m.decoder.fd_step_v},
                      {"constraint_subsample", m.decoder.constraint_subsample},
                      {"position_scale", m.decoder.position_scale},
                      {"velocity_scale", m.decoder.velocity_scale},
                      {"energy_gradient_norm", "per_agent"},
                      {"inter_agent_method", "loss_term"},
                      {"seed", m.seed}};
  values_["train"] = TrainConfig{}.to_json();
  auto charged = sim::ChargedConfig{}.to_json();
  charged.erase("kind");
  values_["charged"] = charged;
  auto social = sim::SocialnavConfig{}.to_json();
  social.erase("kind");
  values_["socialnav"] = social;
  values_["data"] = {{"split_train", 0.8}, {"split_val", 0.1}, {"split_test", 0.1}, {"split_seed", std::uint64_t{0}}};
  values_["eval"] = {{"zero_shot_episodes", std::uint64_t{50}}, {"zero_shot_seed", std::uint64_t{1000}}};
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  c.merge_text(text);
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto [section, name] = split_key(key);
  if (!values_.contains(section) || !values_[section].contains(name)) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  values_[section][name] = parse_like(values_[section][name], key, value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool RunConfig::has(const std::string& key) const {
  const auto dot = key.find('.');
  if (dot == std::string::npos) return false;
  const auto section = key.substr(0, dot), name = key.substr(dot + 1);
  return values_.contains(section) && values_.at(section).contains(name);
}

const nlohmann::json& RunConfig::get(const std::string& key) const {
  if (!has(key)) throw ConfigError("unknown config key '" + key + "'");
  const auto [section, name] = split_key(key);
  return values_.at(section).at(name);
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [section, entries] : values_.items())
    for (const auto& [name, v] : entries.items()) out += section + "." + name + " = " + render(v) + "\n";
  return out;
}

ModelConfig RunConfig::model() const {
  const auto& m = values_.at("model");
  ModelConfig c = ModelConfig::make(m.at("hidden_size"), m.at("edge_types"), m.at("t_obs"), m.at("t_pred"),
                                    m.at("dt"), m.at("position_scale"), m.at("velocity_scale"));
  c.decoder.energy_dim = m.at("energy_dim");
  c.decoder.gamma = m.at("gamma");
  c.decoder.beta = m.at("beta");
  c.decoder.alpha = m.at("alpha");
  c.decoder.fd_step_x = m.at("fd_step_x");
  c.decoder.fd_step_v = m.at("fd_step_v");
  c.decoder.constraint_subsample = m.at("constraint_subsample");
  c.seed = m.at("seed");
  // Enum strings go through the JSON reader for validation.
  nlohmann::json enums{{"decoder",
                        {{"energy_gradient_norm", m.at("energy_gradient_norm")},
                         {"inter_agent_method", m.at("inter_agent_method")}}}};
  const ModelConfig parsed = ModelConfig::from_json(enums);
  c.decoder.energy_gradient_norm = parsed.decoder.energy_gradient_norm;
  c.decoder.inter_agent_method = parsed.decoder.inter_agent_method;
  return c;
}

TrainConfig RunConfig::train() const { return TrainConfig::from_json(values_.at("train")); }
sim::ChargedConfig RunConfig::charged() const { return sim::ChargedConfig::from_json(values_.at("charged")); }
sim::SocialnavConfig RunConfig::socialnav() const {
  return sim::SocialnavConfig::from_json(values_.at("socialnav"));
}

std::array<double, 3> RunConfig::split_ratios() const {
  const auto& d = values_.at("data");
  return {d.at("split_train").get<double>(), d.at("split_val").get<double>(), d.at("split_test").get<double>()};
}

std::uint64_t RunConfig::split_seed() const { return values_.at("data").at("split_seed"); }

}  // namespace mate
