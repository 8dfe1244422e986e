#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/model.hpp"

namespace mate {

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay_factor = 0.9;
  std::size_t plateau_patience = 5;
  double lambda1 = 1.0;    // weight of the inter-agent constraint
  double lambda2 = 0.001;  // weight of the intra-agent constraint
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables clipping
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossReport {
  std::size_t epoch = 0;
  std::string split;
  double L_P = 0.0;
  double L_E = 0.0;
  double L_D = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

/// Header and row of the epoch log CSV.
std::string loss_csv_header();
std::string loss_csv_row(const LossReport& r);

/// Mean over agents and predicted steps of the Euclidean distance between
/// the rollout's predictions and positions[1..T-1].
Var loss_position(Tape& tape, const Rollout& rollout, const Tensor& positions);

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParamStore& params);
};

/// Bias-corrected Adam update in place.
void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state, double lr);

/// Scales the gradients to global norm <= max_norm; returns the norm before scaling.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

struct EpisodeLoss {
  double L_P = 0.0;
  double L_E = 0.0;
  double L_D = 0.0;
  double total = 0.0;
  bool constraints_evaluated = false;
  std::vector<Tensor> grads;  // empty unless requested
};

/// Forward pass, loss assembly and optionally gradients for one episode.
/// Constraint terms are skipped entirely when their weight is zero.
/// `step_seed` drives the choice of constraint steps.
EpisodeLoss episode_loss(const Model& model, const ParamStore& params, const Episode& episode,
                         const TrainConfig& config, std::uint64_t step_seed, bool want_grads);

struct TrainHooks {
  std::function<void(const LossReport&)> on_epoch;
  /// Written whenever validation L_P improves.
  std::optional<std::filesystem::path> checkpoint_path;
  nlohmann::json checkpoint_meta = nlohmann::json::object();
};

struct TrainResult {
  std::vector<LossReport> log;
  std::size_t best_epoch = 0;
  double best_val_L_P = 0.0;
  double final_lr = 0.0;
  std::size_t constraint_evaluations = 0;
};

/// End-to-end training. On return the model holds the best-validation parameters.
TrainResult train(Model& model, std::span<const Episode> train_set, std::span<const Episode> val_set,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// Averaged loss terms over a set of episodes without gradients.
LossReport evaluate_losses(const Model& model, std::span<const Episode> episodes, const TrainConfig& config,
                           std::uint64_t seed);

}  // namespace mate
