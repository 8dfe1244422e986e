#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/dataio.hpp"

namespace mate::sim {

using Vec2 = std::array<double, 2>;

struct ChargedConfig {
  std::size_t n_particles = 5;
  double box_side = 5.0;
  double sample_dt = 0.2;
  double inner_dt = 1e-3;
  std::size_t n_steps = 100;
  double softening = 0.1;
  double init_speed_std = 0.5;
  bool walls = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t inner_steps_per_sample() const;
  nlohmann::json to_json() const;
  static ChargedConfig from_json(const nlohmann::json& j);
};

/// Unit masses, unit Coulomb constant.
struct ChargedState {
  std::vector<Vec2> x, v;
  std::vector<int> q;
};

/// F_i = sum_j q_i q_j (x_i - x_j) / max(|x_i - x_j|, eps)^3.
std::vector<Vec2> coulomb_forces(const ChargedState& s, double softening);

/// Kick-drift-kick step with specular reflection at the box walls when enabled.
/// `forces` holds the forces at the current positions and is updated in place.
void leapfrog_step(ChargedState& s, std::vector<Vec2>& forces, double dt, double softening, double box_side,
                   bool walls);

Vec2 total_momentum(const ChargedState& s);
/// Kinetic plus pairwise potential sum q_i q_j / r (exact while r > softening).
double total_energy(const ChargedState& s);

/// Random initial condition for episode `index`; the RNG stream is derived
/// from (config.seed, index).
ChargedState initial_charged_state(const ChargedConfig& config, std::uint64_t index);

Episode simulate_charged(const ChargedConfig& config, std::uint64_t index = 0);
Episode simulate_charged_from(const ChargedConfig& config, ChargedState state);

/// Zero-shot variants: doubled agents, halved sampling step, smaller box.
std::vector<std::pair<std::string, ChargedConfig>> charged_variants(const ChargedConfig& base);

}  // namespace mate::sim
