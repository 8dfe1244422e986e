#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/dataio.hpp"
#include "mate/model.hpp"

namespace mate {

/// Mean over steps and agents of the Euclidean distance; inputs [T][N][2].
double ade(const Tensor& pred, const Tensor& truth);
/// Mean over agents of the last-step Euclidean distance.
double fde(const Tensor& pred, const Tensor& truth);

/// argmax_{j != i} z[i][j][k] for every agent i, lowest index on ties. z is [N][N][K].
std::vector<std::size_t> predicted_targets(const Tensor& z, std::size_t edge_type);

/// Fraction of agents whose predicted target equals the true one.
double graph_accuracy(const Tensor& z, const std::vector<std::size_t>& targets, std::size_t edge_type);
double graph_accuracy(const Tensor& z, const Episode& episode, std::size_t edge_type);

/// Edge type with the highest mean accuracy over the given latents (lowest index on ties).
std::size_t select_edge_type(std::span<const Tensor> latents, std::span<const Episode> episodes);

/// Extrapolates the last observed velocity: [t_pred][N][2].
Tensor constant_velocity_baseline(const Tensor& positions, std::size_t t_obs, std::size_t t_pred);

/// Ground-truth rows [t_obs, t_obs + t_pred).
Tensor future_truth(const Tensor& positions, std::size_t t_obs, std::size_t t_pred);

struct EvalReport {
  std::string label;
  double ade = 0.0;
  double fde = 0.0;
  double baseline_ade = 0.0;
  double baseline_fde = 0.0;
  std::optional<double> graph_accuracy;
  std::optional<std::size_t> edge_type;
  std::size_t n_episodes = 0;
  std::size_t n_agents = 0;
  std::string fingerprint;

  nlohmann::json to_json() const;
};

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_fingerprint(const nlohmann::json& config);

struct EvalOptions {
  /// Frozen edge type for graph accuracy; chosen on `selection` when absent.
  std::optional<std::size_t> edge_type;
  std::span<const Episode> selection;
  std::size_t threads = 1;
};

/// Prediction metrics over the t_pred horizon; graph accuracy when every
/// episode carries targets.
EvalReport evaluate(const Model& model, std::span<const Episode> episodes, const EvalOptions& options = {});

struct ZeroShotRow {
  std::string variant;
  nlohmann::json generator;
  EvalReport report;
};

struct ZeroShotOptions {
  std::size_t episodes_per_variant = 50;
  std::uint64_t seed = 1000;
  std::optional<std::size_t> edge_type;
  std::size_t threads = 1;
};

/// Regenerates fresh datasets for the base generator config and each of its
/// variants and evaluates the model on all of them without retraining.
/// `generator` is a simulator config JSON with a "kind" field.
std::vector<ZeroShotRow> zero_shot_eval(const Model& model, const nlohmann::json& generator,
                                        const ZeroShotOptions& options = {});

std::string report_csv(std::span<const EvalReport> reports);
std::string report_table(std::span<const EvalReport> reports);

}  // namespace mate
