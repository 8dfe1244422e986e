#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/dataio.hpp"
#include "mate/sim_charged.hpp"

namespace mate::sim {

struct SocialnavConfig {
  std::size_t n_agents = 5;
  double agent_radius = 0.3;
  double arena_radius = 8.0;
  double preferred_speed = 1.0;
  double dt = 0.25;
  std::size_t t_total = 34;
  double time_horizon = 2.0;  // tau
  std::size_t max_placement_attempts = 10000;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SocialnavConfig from_json(const nlohmann::json& j);
};

/// Directed half-plane: feasible velocities lie to the left of `direction`
/// through `point`.
struct OrcaLine {
  Vec2 point{0.0, 0.0};
  Vec2 direction{0.0, 0.0};
};

struct OrcaNeighbor {
  Vec2 position;
  Vec2 velocity;
  /// False when the neighbour cannot move out of the way (pinned, or pressed
  /// against the arena wall); the agent then takes the whole avoidance.
  bool reciprocal = true;
};

/// ORCA half-plane induced by one neighbour. Each agent takes half of the
/// avoidance responsibility, or all of it against a non-reciprocal neighbour.
OrcaLine orca_line(const Vec2& position, const Vec2& velocity, const OrcaNeighbor& other, double combined_radius,
                   double time_horizon, double time_step);

/// Velocity closest to `preferred` inside the disc of radius `max_speed`
/// satisfying every half-plane; when infeasible, minimises the largest
/// violation instead. The first `hard` lines are never relaxed.
Vec2 solve_orca(const std::vector<OrcaLine>& lines, double max_speed, const Vec2& preferred, std::size_t hard = 0);

/// Full per-agent velocity selection against every neighbour in range, plus
/// a hard arena-wall half-plane near the boundary.
Vec2 orca_velocity(const Vec2& position, const Vec2& velocity, const Vec2& preferred,
                   const std::vector<OrcaNeighbor>& neighbors, const SocialnavConfig& config);

struct SocialnavSetup {
  std::vector<Vec2> positions;
  std::vector<std::size_t> targets;
  /// Agents flagged here never move (preferred velocity zero, not simulated).
  std::vector<bool> pinned;
};

SocialnavSetup initial_socialnav_setup(const SocialnavConfig& config, std::uint64_t index);

Episode simulate_socialnav(const SocialnavConfig& config, std::uint64_t index = 0);
Episode simulate_socialnav_from(const SocialnavConfig& config, const SocialnavSetup& setup);

/// Zero-shot variants: doubled agents, doubled preferred speed.
std::vector<std::pair<std::string, SocialnavConfig>> socialnav_variants(const SocialnavConfig& base);

/// Smallest pairwise distance over every step of an episode.
double min_pairwise_distance(const Episode& episode);

}  // namespace mate::sim
