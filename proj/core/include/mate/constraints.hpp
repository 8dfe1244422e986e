#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mate/autodiff.hpp"
#include "mate/decoder.hpp"
#include "mate/params.hpp"

namespace mate {

/// Finite-difference terms for a set of agents at one step context.
/// Each perturbed evaluation re-runs the decoder cell with only that agent's
/// own x_prev / v_prev shifted; the message and hidden state stay frozen.
struct StepConstraintTerms {
  Var energy_gradient;  // [A][2]   d e_a / d x_prev
  Var motion_variance;  // [A][4]   u_a row-major 2x2 (includes alpha)
  double step_x = 0.0;
  double step_v = 0.0;
};

StepConstraintTerms evaluate_step_constraints(Tape& tape, const Decoder& decoder, const ParamStore& store,
                                              const StepContext& ctx, std::span<const std::size_t> agents,
                                              bool want_energy_gradient, bool want_motion_variance);

/// Central-difference gradient of agent i's scalar energy w.r.t. its own position: [2].
Var energy_gradient(Tape& tape, const Decoder& decoder, const ParamStore& store, const StepContext& ctx,
                    std::size_t agent);

/// u = gamma * d(grad_x e)/d v_prev + beta * d x / d v_prev + alpha, as [2][2].
Var motion_variance(Tape& tape, const Decoder& decoder, const ParamStore& store, const StepContext& ctx,
                    std::size_t agent);

struct ConstraintReport {
  Var inter_agent;  // L_E (invalid when not requested)
  Var intra_agent;  // L_D (invalid when not requested)
  double mean_energy_gradient_norm = 0.0;
  double mean_motion_variance_norm = 0.0;
  std::size_t steps_used = 0;
};

/// Both losses over the given context indices of `rollout` (indices into
/// rollout.contexts). Each loss is averaged over agents and steps.
ConstraintReport constraint_losses(Tape& tape, const Decoder& decoder, const ParamStore& store,
                                   const Rollout& rollout, std::span<const std::size_t> steps,
                                   bool want_inter_agent, bool want_intra_agent);

Var loss_inter_agent(Tape& tape, const Decoder& decoder, const ParamStore& store, const Rollout& rollout,
                     std::span<const std::size_t> steps);
Var loss_intra_agent(Tape& tape, const Decoder& decoder, const ParamStore& store, const Rollout& rollout,
                     std::span<const std::size_t> steps);

/// ceil(fraction * n) distinct context indices in increasing order (at least one).
std::vector<std::size_t> select_constraint_steps(std::size_t n, double fraction, std::mt19937_64& rng);

}  // namespace mate
