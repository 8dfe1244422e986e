#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mate/autodiff.hpp"
#include "mate/encoder.hpp"
#include "mate/nn.hpp"
#include "mate/params.hpp"

namespace mate {

/// How the inter-agent constraint enters training. Only the loss term is
/// implemented; the second value is reserved and rejected at construction.
enum class InterAgentMethod { LossTerm, Reserved };

/// Per-agent: mean_i |grad e_i|. SystemSum: |sum_i grad e_i|.
enum class EnergyGradientNorm { PerAgent, SystemSum };

struct DecoderConfig {
  std::size_t hidden_size = 64;
  std::size_t energy_dim = 16;
  std::size_t num_edge_types = 2;
  double dt = 0.2;
  std::size_t t_obs = 80;
  std::size_t t_pred = 20;
  // Temporal motion variance coefficients.
  double gamma = 1.0;
  double beta = 1.0;
  double alpha = 0.0;
  // Relative finite-difference steps for the constraint Jacobians; the actual
  // step is fd_step * max(1, |state|_inf) per step context.
  double fd_step_x = 1e-2;
  double fd_step_v = 1e-2;
  double constraint_subsample = 0.25;
  // Inputs to the embedding and output head are divided by these.
  double position_scale = 1.0;
  double velocity_scale = 1.0;
  InterAgentMethod inter_agent_method = InterAgentMethod::LossTerm;
  EnergyGradientNorm energy_gradient_norm = EnergyGradientNorm::PerAgent;

  void validate() const;
};

/// Test hooks that bypass parts of the cell.
struct DecoderHooks {
  /// Replaces the energy MLP; returns E [R][d] from (x_prev, v_prev, h).
  std::function<Var(Var x_prev, Var v_prev, Var h)> energy;
  /// Replaces the output head; returns dx [R][2] from (x_prev, v_prev, E).
  std::function<Var(Var x_prev, Var v_prev, Var energy)> displacement;
  /// Feed zeros instead of E into the output head.
  bool zero_energy_into_output = false;
  /// Reset the hidden state to zero before every step.
  bool reset_hidden = false;
};

/// Row-batched cell inputs: R rows of (x_prev, v_prev, message, h_prev).
struct CellInputs {
  Var x_prev;  // [R][2]
  Var v_prev;  // [R][2]
  Var msg;     // [R][H]
  Var h_prev;  // [R][H]
};

struct DecoderState {
  Var h;   // [R][H]
  Var E;   // [R][d_E] energy features
  Var e;   // [R] scalar energy, mean of E over features
  Var dx;  // [R][2]
  Var x;   // [R][2]
  Var v;   // [R][2]
};

/// Everything needed to re-run one step with perturbed kinematic inputs.
struct StepContext {
  std::size_t step = 0;  // index of the predicted position
  Var x_prev, v_prev, h_prev, msg;
  double dt = 0.0;
};

enum class RolloutMode { Train, Eval };

struct Rollout {
  std::size_t t_obs = 0;
  Tensor initial;                      // [N][2] ground-truth x_0
  std::vector<Var> predictions;        // [N][2] for t = 1 .. T-1
  std::vector<DecoderState> states;
  std::vector<StepContext> contexts;
  std::vector<bool> teacher_forced;    // inputs of step t were ground truth

  std::size_t length() const { return predictions.size() + 1; }
  /// [T][N][2]; row 0 is the ground-truth start.
  Tensor positions() const;
  /// [t_pred][N][2] rows t_obs .. T-1.
  Tensor future() const;
};

/// Recurrent decoder with the neural interaction energy cell:
/// message passing over z -> GRU -> energy MLP -> output head.
class Decoder {
 public:
  Decoder(const DecoderConfig& config, ParamStore& store);

  /// m[i] = sum_{j != i} sum_k z[i][j][k] * msg_k([h_i, h_j]).
  Var messages(Tape& tape, const ParamStore& store, const InteractionLatent& z, Var h_prev) const;

  /// The per-row part of a step (embedding, GRU, energy, output head).
  DecoderState cell(Tape& tape, const ParamStore& store, const CellInputs& in, double dt) const;

  /// One full decoder step for all agents.
  DecoderState step(Tape& tape, const ParamStore& store, Var x_prev, Var v_prev, const InteractionLatent& z,
                    Var h_prev, double dt, StepContext* context = nullptr) const;

  /// Decode from the first observed step. Inputs are ground truth through
  /// t_obs, then the model's own outputs. Train mode predicts every step of
  /// `positions`; eval mode predicts t_obs + t_pred - 1 steps and reads only
  /// the first t_obs rows of `positions`.
  Rollout rollout(Tape& tape, const ParamStore& store, const Tensor& positions, double dt,
                  const InteractionLatent& z, RolloutMode mode) const;

  const DecoderConfig& config() const { return config_; }
  DecoderHooks& hooks() { return hooks_; }
  const DecoderHooks& hooks() const { return hooks_; }
  const nn::Mlp& energy_mlp() const { return energy_mlp_; }
  const nn::Mlp& output_mlp() const { return out_mlp_; }

 private:
  DecoderConfig config_;
  DecoderHooks hooks_;
  std::vector<nn::Mlp> msg_mlps_;
  nn::Mlp embed_mlp_;
  nn::Linear gru_input_;
  nn::Linear gru_hidden_;
  nn::Mlp energy_mlp_;
  nn::Mlp out_mlp_;
};

}  // namespace mate
