#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/tensor.hpp"

namespace mate {

enum class EpisodeKind { Charged, Socialnav, External };

std::string to_string(EpisodeKind kind);
EpisodeKind episode_kind_from_string(const std::string& s);

/// One multi-agent scene.
struct Episode {
  Tensor positions;  // [T][N][2]
  double dt = 0.0;
  EpisodeKind kind = EpisodeKind::External;
  std::optional<std::vector<int>> charges;          // charged scenes
  std::optional<std::vector<std::size_t>> targets;  // socialnav scenes; targets[i] != i

  std::size_t steps() const { return positions.dim(0); }
  std::size_t agents() const { return positions.dim(1); }
  /// Throws mate::Error when an invariant does not hold.
  void validate() const;
};

struct Splits {
  std::vector<std::size_t> train, val, test;
};

struct DatasetManifest {
  int format_version = 1;
  EpisodeKind kind = EpisodeKind::External;
  std::size_t count = 0;
  std::optional<Splits> splits;
  nlohmann::json generator = nlohmann::json::object();

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// Sidecar path "<file>.manifest.json".
std::filesystem::path manifest_path(const std::filesystem::path& episodes_file);

/// Single-line JSON record:
///   {"v":1,"kind":..,"dt":..,"positions":[[[x,y],..],..],"meta":{..}}
/// with every number written using 17 significant digits.
std::string episode_to_json_line(const Episode& episode);
Episode episode_from_json(const nlohmann::json& j);

/// Writes JSON-Lines episodes plus the manifest sidecar and returns the manifest.
DatasetManifest write_episodes(const std::filesystem::path& path, std::span<const Episode> episodes,
                               const nlohmann::json& generator = nlohmann::json::object(),
                               std::optional<Splits> splits = std::nullopt);

std::vector<Episode> read_episodes(const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& episodes_file);

struct Dataset {
  std::vector<Episode> episodes;
  DatasetManifest manifest;

  std::vector<Episode> subset(const std::vector<std::size_t>& indices) const;
};

/// Reads episodes and manifest and checks that the counts agree.
Dataset load_dataset(const std::filesystem::path& path);

/// Seeded shuffle of [0, count) followed by a contiguous partition.
Splits split(std::size_t count, std::array<double, 3> ratios, std::uint64_t seed);

/// One line of a predictions file:
///   {"episode":i,"t_obs":..,"positions":[[[x,y],..],..]}
/// where positions are the predicted future [t_pred][N][2].
struct PredictionRecord {
  std::size_t episode = 0;
  std::size_t t_obs = 0;
  Tensor positions;
};

std::string prediction_to_json_line(const PredictionRecord& record);
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// Backward-difference velocities [T-1][N][2]: entry t is (x_{t+1} - x_t) / dt,
/// i.e. the velocity at step t+1; step 0 reuses entry 0.
Tensor derive_velocities(const Tensor& positions, double dt);

}  // namespace mate
