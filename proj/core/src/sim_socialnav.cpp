#include "mate/sim_socialnav.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "mate/errors.hpp"

namespace mate::sim {

namespace {

constexpr double kEps = 1e-9;
// ORCA discs are inflated slightly so discretisation and LP round-off do not
// leave agents marginally overlapping.
constexpr double kRadiusMargin = 0.05;

Vec2 operator+(Vec2 a, Vec2 b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec2 operator*(double s, Vec2 a) { return {s * a[0], s * a[1]}; }
double dot(Vec2 a, Vec2 b) { return a[0] * b[0] + a[1] * b[1]; }
double det(Vec2 a, Vec2 b) { return a[0] * b[1] - a[1] * b[0]; }
double abs_sq(Vec2 a) { return dot(a, a); }
Vec2 normalize(Vec2 a) {
  const double n = std::sqrt(abs_sq(a));
  return n > 0.0 ? (1.0 / n) * a : Vec2{0.0, 0.0};
}

bool lp1(const std::vector<OrcaLine>& lines, std::size_t line_no, double radius, Vec2 opt, bool direction_opt,
         Vec2& result) {
  const auto& ln = lines[line_no];
  const double d = dot(ln.point, ln.direction);
  const double disc = d * d + radius * radius - abs_sq(ln.point);
  if (disc < 0.0) return false;  // max-speed circle misses the line
  const double sq = std::sqrt(disc);
  double t_left = -d - sq;
  double t_right = -d + sq;
  for (std::size_t i = 0; i < line_no; ++i) {
    const double denom = det(ln.direction, lines[i].direction);
    const double numer = det(lines[i].direction, ln.point - lines[i].point);
    if (std::abs(denom) <= kEps) {
      if (numer < 0.0) return false;  // parallel and infeasible
      continue;
    }
    const double t = numer / denom;
    if (denom >= 0.0) t_right = std::min(t_right, t);
    else t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }
  if (direction_opt) {
    result = dot(opt, ln.direction) > 0.0 ? ln.point + t_right * ln.direction : ln.point + t_left * ln.direction;
  } else {
    const double t = std::clamp(dot(ln.direction, opt - ln.point), t_left, t_right);
    result = ln.point + t * ln.direction;
  }
  return true;
}

std::size_t lp2(const std::vector<OrcaLine>& lines, double radius, Vec2 opt, bool direction_opt, Vec2& result) {
  if (direction_opt) result = radius * opt;
  else if (abs_sq(opt) > radius * radius) result = radius * normalize(opt);
  else result = opt;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) > 0.0) {
      const Vec2 saved = result;
      if (!lp1(lines, i, radius, opt, direction_opt, result)) {
        result = saved;
        return i;
      }
    }
  }
  return lines.size();
}

// The first `hard` lines are never relaxed.
void lp3(const std::vector<OrcaLine>& lines, std::size_t hard, std::size_t begin, double radius, Vec2& result) {
  double distance = 0.0;
  for (std::size_t i = begin; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) <= distance) continue;
    std::vector<OrcaLine> projected(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(hard));
    for (std::size_t j = hard; j < i; ++j) {
      OrcaLine line;
      const double determinant = det(lines[i].direction, lines[j].direction);
      if (std::abs(determinant) <= kEps) {
        if (dot(lines[i].direction, lines[j].direction) > 0.0) continue;
        line.point = 0.5 * (lines[i].point + lines[j].point);
      } else {
        line.point = lines[i].point +
                     (det(lines[j].direction, lines[i].point - lines[j].point) / determinant) * lines[i].direction;
      }
      line.direction = normalize(lines[j].direction - lines[i].direction);
      projected.push_back(line);
    }
    const Vec2 saved = result;
    if (lp2(projected, radius, Vec2{-lines[i].direction[1], lines[i].direction[0]}, true, result) < projected.size()) {
      result = saved;
    }
    distance = det(lines[i].direction, lines[i].point - result);
  }
}

}  // namespace

void SocialnavConfig::validate() const {
  if (n_agents < 1) throw ConfigError("socialnav.n_agents must be >= 1");
  if (!(agent_radius > 0.0)) throw ConfigError("socialnav.agent_radius must be positive");
  if (!(preferred_speed > 0.0)) throw ConfigError("socialnav.preferred_speed must be positive");
  if (!(arena_radius > agent_radius)) throw ConfigError("socialnav.arena_radius must exceed the agent radius");
  if (!(dt > 0.0)) throw ConfigError("socialnav.dt must be positive");
  if (!(time_horizon > 0.0)) throw ConfigError("socialnav.time_horizon must be positive");
  if (t_total < 2) throw ConfigError("socialnav.t_total must be >= 2");
}

nlohmann::json SocialnavConfig::to_json() const {
  return {{"kind", "socialnav"},
          {"n_agents", n_agents},
          {"agent_radius", agent_radius},
          {"arena_radius", arena_radius},
          {"preferred_speed", preferred_speed},
          {"dt", dt},
          {"t_total", t_total},
          {"time_horizon", time_horizon},
          {"seed", seed}};
}

SocialnavConfig SocialnavConfig::from_json(const nlohmann::json& j) {
  SocialnavConfig c;
  c.n_agents = j.value("n_agents", c.n_agents);
  c.agent_radius = j.value("agent_radius", c.agent_radius);
  c.arena_radius = j.value("arena_radius", c.arena_radius);
  c.preferred_speed = j.value("preferred_speed", c.preferred_speed);
  c.dt = j.value("dt", c.dt);
  c.t_total = j.value("t_total", c.t_total);
  c.time_horizon = j.value("time_horizon", c.time_horizon);
  c.seed = j.value("seed", c.seed);
  return c;
}

OrcaLine orca_line(const Vec2& position, const Vec2& velocity, const OrcaNeighbor& other, double combined_radius,
                   double time_horizon, double time_step) {
  const Vec2 rel_pos = other.position - position;
  const Vec2 rel_vel = velocity - other.velocity;
  const double dist_sq = abs_sq(rel_pos);
  const double r_sq = combined_radius * combined_radius;
  OrcaLine line;
  Vec2 u;
  if (dist_sq > r_sq) {
    const double inv_tau = 1.0 / time_horizon;
    // Vector from the cut-off centre to the relative velocity.
    const Vec2 w = rel_vel - inv_tau * rel_pos;
    const double w_len_sq = abs_sq(w);
    const double dot1 = dot(w, rel_pos);
    if (dot1 < 0.0 && dot1 * dot1 > r_sq * w_len_sq) {
      const double w_len = std::sqrt(w_len_sq);
      const Vec2 unit_w = (1.0 / w_len) * w;
      line.direction = {unit_w[1], -unit_w[0]};
      u = (combined_radius * inv_tau - w_len) * unit_w;
    } else {
      const double leg = std::sqrt(dist_sq - r_sq);
      if (det(rel_pos, w) > 0.0) {
        line.direction = (1.0 / dist_sq) * Vec2{rel_pos[0] * leg - rel_pos[1] * combined_radius,
                                                rel_pos[0] * combined_radius + rel_pos[1] * leg};
      } else {
        line.direction = (-1.0 / dist_sq) * Vec2{rel_pos[0] * leg + rel_pos[1] * combined_radius,
                                                 -rel_pos[0] * combined_radius + rel_pos[1] * leg};
      }
      u = dot(rel_vel, line.direction) * line.direction - rel_vel;
    }
  } else {
    // Already overlapping: resolve within one time step.
    const double inv_dt = 1.0 / time_step;
    const Vec2 w = rel_vel - inv_dt * rel_pos;
    const double w_len = std::sqrt(abs_sq(w));
    const Vec2 unit_w = w_len > 0.0 ? (1.0 / w_len) * w : Vec2{1.0, 0.0};
    line.direction = {unit_w[1], -unit_w[0]};
    u = (combined_radius * inv_dt - w_len) * unit_w;
  }
  line.point = velocity + (other.reciprocal ? 0.5 : 1.0) * u;
  return line;
}

Vec2 solve_orca(const std::vector<OrcaLine>& lines, double max_speed, const Vec2& preferred, std::size_t hard) {
  Vec2 result{0.0, 0.0};
  const std::size_t fail = lp2(lines, max_speed, preferred, false, result);
  if (fail < lines.size()) lp3(lines, std::min(hard, fail), fail, max_speed, result);
  return result;
}

Vec2 orca_velocity(const Vec2& position, const Vec2& velocity, const Vec2& preferred,
                   const std::vector<OrcaNeighbor>& neighbors, const SocialnavConfig& config) {
  const double combined = 2.0 * config.agent_radius * (1.0 + kRadiusMargin);
  const double reach = 2.0 * config.preferred_speed * config.time_horizon + combined;
  std::vector<OrcaLine> lines;
  // Arena wall: outward speed limited so the next step stays inside.
  std::size_t hard = 0;
  const double r = std::sqrt(abs_sq(position));
  const double slack = (config.arena_radius - config.agent_radius - r) / config.dt;
  if (r > 0.0 && slack < config.preferred_speed) {
    const Vec2 n = (1.0 / r) * position;
    lines.push_back({std::max(slack, 0.0) * n, Vec2{-n[1], n[0]}});
    hard = 1;
  }
  for (const auto& nb : neighbors) {
    if (abs_sq(nb.position - position) > reach * reach) continue;
    lines.push_back(orca_line(position, velocity, nb, combined, config.time_horizon, config.dt));
  }
  Vec2 v = solve_orca(lines, config.preferred_speed, preferred, hard);
  const double speed = std::sqrt(abs_sq(v));
  if (speed > config.preferred_speed) v = (config.preferred_speed / speed) * v;
  return v;
}

SocialnavSetup initial_socialnav_setup(const SocialnavConfig& config, std::uint64_t index) {
  config.validate();
  if (config.n_agents < 2) throw ConfigError("socialnav: need at least 2 agents");
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x53u};
  std::mt19937_64 rng(seq);
  const double r_max = config.arena_radius - config.agent_radius;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SocialnavSetup s;
  std::size_t attempts = 0;
  while (s.positions.size() < config.n_agents) {
    if (++attempts > config.max_placement_attempts) {
      throw ConfigError("socialnav: could not place " + std::to_string(config.n_agents) +
                        " agents without overlap");
    }
    const double r = r_max * std::sqrt(unit(rng));
    const double th = 2.0 * M_PI * unit(rng);
    const Vec2 p{r * std::cos(th), r * std::sin(th)};
    bool ok = true;
    for (const auto& q : s.positions) ok = ok && abs_sq(p - q) >= 4.0 * config.agent_radius * config.agent_radius;
    if (ok) s.positions.push_back(p);
  }
  for (std::size_t i = 0; i < config.n_agents; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, config.n_agents - 2);
    std::size_t t = pick(rng);
    if (t >= i) ++t;
    s.targets.push_back(t);
  }
  s.pinned.assign(config.n_agents, false);
  return s;
}

Episode simulate_socialnav_from(const SocialnavConfig& config, const SocialnavSetup& setup) {
  config.validate();
  const std::size_t n = setup.positions.size();
  if (setup.targets.size() != n) throw ConfigError("socialnav setup: targets size mismatch");
  std::vector<bool> pinned = setup.pinned;
  pinned.resize(n, false);
  Episode ep;
  ep.kind = EpisodeKind::Socialnav;
  ep.dt = config.dt;
  ep.targets = setup.targets;
  ep.positions = Tensor(Shape{config.t_total, n, 2});
  std::vector<Vec2> x = setup.positions;
  std::vector<Vec2> v(n, Vec2{0.0, 0.0});
  const double r_max = config.arena_radius - config.agent_radius;
  auto record = [&](std::size_t t) {
    for (std::size_t i = 0; i < n; ++i) {
      ep.positions(t, i, 0) = x[i][0];
      ep.positions(t, i, 1) = x[i][1];
    }
  };
  record(0);
  for (std::size_t t = 1; t < config.t_total; ++t) {
    // Agents pressed against the wall (or pinned) choose first; everyone
    // else then avoids them as moving obstacles with known velocities.
    std::vector<bool> first(n);
    for (std::size_t i = 0; i < n; ++i) {
      first[i] = pinned[i] || r_max - std::sqrt(abs_sq(x[i])) < config.preferred_speed * config.dt;
    }
    std::vector<Vec2> next_v(n, Vec2{0.0, 0.0});
    auto choose = [&](std::size_t i, bool second_pass) {
      const Vec2 to_target = x[setup.targets[i]] - x[i];
      Vec2 pref{0.0, 0.0};
      if (std::sqrt(abs_sq(to_target)) > 2.0 * config.agent_radius * (1.0 + kRadiusMargin)) {
        pref = config.preferred_speed * normalize(to_target);
      }
      std::vector<OrcaNeighbor> neighbors;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (second_pass && first[j]) neighbors.push_back({x[j], next_v[j], false});
        else neighbors.push_back({x[j], v[j], true});
      }
      next_v[i] = orca_velocity(x[i], v[i], pref, neighbors, config);
    };
    for (std::size_t i = 0; i < n; ++i)
      if (first[i] && !pinned[i]) choose(i, false);
    for (std::size_t i = 0; i < n; ++i)
      if (!first[i]) choose(i, true);
    for (std::size_t i = 0; i < n; ++i) {
      Vec2 moved = x[i] + config.dt * next_v[i];
      const double r = std::sqrt(abs_sq(moved));
      if (r > r_max) moved = (r_max / r) * moved;
      // Neighbours see the velocity actually realised after clamping.
      v[i] = (1.0 / config.dt) * (moved - x[i]);
      x[i] = moved;
    }
    record(t);
  }
  return ep;
}

Episode simulate_socialnav(const SocialnavConfig& config, std::uint64_t index) {
  return simulate_socialnav_from(config, initial_socialnav_setup(config, index));
}

std::vector<std::pair<std::string, SocialnavConfig>> socialnav_variants(const SocialnavConfig& base) {
  std::vector<std::pair<std::string, SocialnavConfig>> out;
  SocialnavConfig agents = base;
  agents.n_agents = 10;
  out.emplace_back("double_agents", agents);
  SocialnavConfig speed = base;
  speed.preferred_speed = 2.0;
  out.emplace_back("double_speed", speed);
  return out;
}

double min_pairwise_distance(const Episode& episode) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = episode.agents();
  for (std::size_t t = 0; t < episode.steps(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = std::hypot(episode.positions(t, i, 0) - episode.positions(t, j, 0),
                                    episode.positions(t, i, 1) - episode.positions(t, j, 1));
        best = std::min(best, d);
      }
  return best;
}

}  // namespace mate::sim
