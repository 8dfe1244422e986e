#include "mate/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "mate/errors.hpp"

namespace mate {

namespace {

constexpr int kFormatVersion = 1;

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
  // Keep integral values typed as floating point so -0.0 survives parsing.
  if (std::strpbrk(buf, ".e") == nullptr) out += ".0";
}

}  // namespace

std::string to_string(EpisodeKind kind) {
  switch (kind) {
    case EpisodeKind::Charged: return "charged";
    case EpisodeKind::Socialnav: return "socialnav";
    case EpisodeKind::External: return "external";
  }
  return "external";
}

EpisodeKind episode_kind_from_string(const std::string& s) {
  if (s == "charged") return EpisodeKind::Charged;
  if (s == "socialnav") return EpisodeKind::Socialnav;
  if (s == "external") return EpisodeKind::External;
  throw ConfigError("unknown episode kind: " + s);
}

void Episode::validate() const {
  const auto& s = positions.shape();
  if (s.size() != 3 || s[2] != 2) throw ShapeError("episode: positions must be [T][N][2], got " + shape_str(s));
  if (s[0] < 2) throw ShapeError("episode: need at least 2 steps");
  if (s[1] < 1) throw ShapeError("episode: need at least 1 agent");
  if (!positions.all_finite()) throw NumericError("episode: non-finite position");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw NumericError("episode: dt must be positive and finite");
  if (charges && charges->size() != s[1]) throw ShapeError("episode: charges length != agent count");
  if (targets) {
    if (targets->size() != s[1]) throw ShapeError("episode: targets length != agent count");
    for (std::size_t i = 0; i < targets->size(); ++i) {
      if ((*targets)[i] >= s[1] || (*targets)[i] == i) {
        throw ConfigError("episode: invalid target for agent " + std::to_string(i));
      }
    }
  }
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format_version"] = format_version;
  j["kind"] = to_string(kind);
  j["count"] = count;
  if (splits) {
    j["splits"] = {{"train", splits->train}, {"val", splits->val}, {"test", splits->test}};
    j["counts"] = {{"train", splits->train.size()}, {"val", splits->val.size()}, {"test", splits->test.size()}};
  }
  j["generator"] = generator;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.kind = episode_kind_from_string(j.at("kind").get<std::string>());
    m.count = j.at("count").get<std::size_t>();
    if (j.contains("splits")) {
      Splits s;
      s.train = j["splits"].at("train").get<std::vector<std::size_t>>();
      s.val = j["splits"].at("val").get<std::vector<std::size_t>>();
      s.test = j["splits"].at("test").get<std::vector<std::size_t>>();
      m.splits = std::move(s);
    }
    m.generator = j.value("generator", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  if (m.format_version != kFormatVersion) throw IoError("unsupported manifest format version");
  return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& episodes_file) {
  return std::filesystem::path(episodes_file.string() + ".manifest.json");
}

namespace {

void append_positions(std::string& out, const Tensor& positions) {
  const std::size_t t_count = positions.dim(0), n = positions.dim(1);
  out += '[';
  for (std::size_t t = 0; t < t_count; ++t) {
    if (t) out += ',';
    out += '[';
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out += ',';
      out += '[';
      append_number(out, positions(t, i, 0));
      out += ',';
      append_number(out, positions(t, i, 1));
      out += ']';
    }
    out += ']';
  }
  out += ']';
}

Tensor parse_positions(const nlohmann::json& pos, std::size_t agents_if_empty) {
  const std::size_t t_count = pos.size();
  const std::size_t n = t_count ? pos.at(0).size() : agents_if_empty;
  Tensor out(Shape{t_count, n, 2});
  for (std::size_t t = 0; t < t_count; ++t) {
    if (pos[t].size() != n) throw IoError("ragged positions array");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = pos[t][i];
      if (p.size() != 2) throw IoError("position must have 2 coordinates");
      out(t, i, 0) = p[0].get<double>();
      out(t, i, 1) = p[1].get<double>();
    }
  }
  return out;
}

}  // namespace

std::string episode_to_json_line(const Episode& episode) {
  episode.validate();
  std::string out = "{\"v\":1,\"kind\":\"" + to_string(episode.kind) + "\",\"dt\":";
  append_number(out, episode.dt);
  out += ",\"positions\":";
  append_positions(out, episode.positions);
  out += ",\"meta\":{";
  if (episode.charges) {
    out += "\"charges\":[";
    for (std::size_t i = 0; i < episode.charges->size(); ++i) {
      if (i) out += ',';
      out += std::to_string((*episode.charges)[i]);
    }
    out += ']';
  }
  if (episode.targets) {
    if (episode.charges) out += ',';
    out += "\"targets\":[";
    for (std::size_t i = 0; i < episode.targets->size(); ++i) {
      if (i) out += ',';
      out += std::to_string((*episode.targets)[i]);
    }
    out += ']';
  }
  out += "}}";
  return out;
}

Episode episode_from_json(const nlohmann::json& j) {
  Episode e;
  try {
    if (j.at("v").get<int>() != kFormatVersion) throw IoError("unsupported episode record version");
    e.kind = episode_kind_from_string(j.at("kind").get<std::string>());
    e.dt = j.at("dt").get<double>();
    e.positions = parse_positions(j.at("positions"), 0);
    if (j.contains("meta")) {
      const auto& meta = j["meta"];
      if (meta.contains("charges")) e.charges = meta["charges"].get<std::vector<int>>();
      if (meta.contains("targets")) e.targets = meta["targets"].get<std::vector<std::size_t>>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("malformed episode record: ") + ex.what());
  }
  e.validate();
  return e;
}

DatasetManifest write_episodes(const std::filesystem::path& path, std::span<const Episode> episodes,
                               const nlohmann::json& generator, std::optional<Splits> splits) {
  DatasetManifest manifest;
  manifest.kind = episodes.empty() ? EpisodeKind::External : episodes.front().kind;
  if (!generator.is_null() && generator.contains("kind")) {
    manifest.kind = episode_kind_from_string(generator["kind"].get<std::string>());
  }
  std::string body;
  for (const auto& e : episodes) {
    if (e.kind != episodes.front().kind) throw ConfigError("write_episodes: mixed episode kinds in one file");
    body += episode_to_json_line(e);
    body += '\n';
  }
  manifest.count = episodes.size();
  manifest.generator = generator.is_null() ? nlohmann::json::object() : generator;
  if (splits) {
    const std::size_t total = splits->train.size() + splits->val.size() + splits->test.size();
    if (total != episodes.size()) throw ConfigError("write_episodes: splits do not cover the episodes");
  }
  manifest.splits = std::move(splits);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << body;
  if (!out) throw IoError("write failed: " + path.string());
  std::ofstream mout(manifest_path(path), std::ios::binary);
  if (!mout) throw IoError("cannot open for writing: " + manifest_path(path).string());
  mout << manifest.to_json().dump(2) << '\n';
  if (!mout) throw IoError("write failed: " + manifest_path(path).string());
  return manifest;
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open episodes file: " + path.string());
  std::vector<Episode> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(episode_from_json(j));
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& episodes_file) {
  const auto mp = manifest_path(episodes_file);
  std::ifstream in(mp);
  if (!in) throw IoError("cannot open manifest: " + mp.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + mp.string() + ": " + e.what());
  }
  return DatasetManifest::from_json(j);
}

std::vector<Episode> Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Episode> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= episodes.size()) throw IoError("dataset split index out of range");
    out.push_back(episodes[i]);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset d;
  d.episodes = read_episodes(path);
  d.manifest = read_manifest(path);
  if (d.manifest.count != d.episodes.size()) {
    throw IoError("manifest count " + std::to_string(d.manifest.count) + " != " +
                  std::to_string(d.episodes.size()) + " records in " + path.string());
  }
  return d;
}

Splits split(std::size_t count, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (r < 0.0) throw ConfigError("split: negative ratio");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = count; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n = static_cast<double>(count);
  const std::size_t n_train = std::min(count, static_cast<std::size_t>(std::floor(ratios[0] * n + 0.5)));
  const std::size_t n_val = std::min(count - n_train, static_cast<std::size_t>(std::floor(ratios[1] * n + 0.5)));
  Splits s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

Tensor derive_velocities(const Tensor& positions, double dt) {
  const auto& s = positions.shape();
  if (s.size() != 3 || s[2] != 2) throw ShapeError("derive_velocities: expected [T][N][2], got " + shape_str(s));
  if (s[0] < 2) throw ShapeError("derive_velocities: need at least 2 steps");
  if (!(dt > 0.0)) throw ConfigError("derive_velocities: dt must be positive");
  const std::size_t t_count = s[0], n = s[1];
  Tensor v(Shape{t_count - 1, n, 2});
  for (std::size_t t = 0; t + 1 < t_count; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c) v(t, i, c) = (positions(t + 1, i, c) - positions(t, i, c)) / dt;
  return v;
}

std::string prediction_to_json_line(const PredictionRecord& record) {
  if (record.positions.rank() != 3 || record.positions.dim(2) != 2) {
    throw ShapeError("prediction: positions must be [T][N][2], got " + shape_str(record.positions.shape()));
  }
  std::string out = "{\"episode\":" + std::to_string(record.episode) + ",\"t_obs\":" + std::to_string(record.t_obs) +
                    ",\"positions\":";
  append_positions(out, record.positions);
  out += '}';
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& r : records) out << prediction_to_json_line(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions file: " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord r;
      r.episode = j.at("episode").get<std::size_t>();
      r.t_obs = j.at("t_obs").get<std::size_t>();
      r.positions = parse_positions(j.at("positions"), 0);
      if (!r.positions.all_finite()) throw IoError("non-finite prediction");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mate
