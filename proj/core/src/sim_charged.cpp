#include "mate/sim_charged.hpp"

#include <cmath>
#include <random>

#include "mate/errors.hpp"

namespace mate::sim {

void ChargedConfig::validate() const {
  if (n_particles < 1) throw ConfigError("charged.n_particles must be >= 1");
  if (!(box_side > 0.0)) throw ConfigError("charged.box_side must be positive");
  if (!(sample_dt > 0.0) || !(inner_dt > 0.0)) throw ConfigError("charged time steps must be positive");
  if (!(softening > 0.0)) throw ConfigError("charged.softening must be positive");
  if (n_steps < 2) throw ConfigError("charged.n_steps must be >= 2");
  if (init_speed_std < 0.0) throw ConfigError("charged.init_speed_std must be >= 0");
  const double ratio = sample_dt / inner_dt;
  if (std::abs(std::round(ratio) * inner_dt - sample_dt) > 1e-12) {
    throw ConfigError("charged.inner_dt must divide charged.sample_dt");
  }
}

std::size_t ChargedConfig::inner_steps_per_sample() const {
  return static_cast<std::size_t>(std::llround(sample_dt / inner_dt));
}

nlohmann::json ChargedConfig::to_json() const {
  return {{"kind", "charged"},         {"n_particles", n_particles}, {"box_side", box_side},
          {"sample_dt", sample_dt},    {"inner_dt", inner_dt},       {"n_steps", n_steps},
          {"softening", softening},    {"init_speed_std", init_speed_std},
          {"walls", walls},            {"seed", seed}};
}

ChargedConfig ChargedConfig::from_json(const nlohmann::json& j) {
  ChargedConfig c;
  c.n_particles = j.value("n_particles", c.n_particles);
  c.box_side = j.value("box_side", c.box_side);
  c.sample_dt = j.value("sample_dt", c.sample_dt);
  c.inner_dt = j.value("inner_dt", c.inner_dt);
  c.n_steps = j.value("n_steps", c.n_steps);
  c.softening = j.value("softening", c.softening);
  c.init_speed_std = j.value("init_speed_std", c.init_speed_std);
  c.walls = j.value("walls", c.walls);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<Vec2> coulomb_forces(const ChargedState& s, double softening) {
  const std::size_t n = s.x.size();
  std::vector<Vec2> f(n, Vec2{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = s.x[i][0] - s.x[j][0];
      const double dy = s.x[i][1] - s.x[j][1];
      const double r = std::max(std::sqrt(dx * dx + dy * dy), softening);
      const double c = static_cast<double>(s.q[i] * s.q[j]) / (r * r * r);
      // Equal and opposite by construction.
      f[i][0] += c * dx;
      f[i][1] += c * dy;
      f[j][0] -= c * dx;
      f[j][1] -= c * dy;
    }
  }
  return f;
}

namespace {

void reflect(double& x, double& v, double half) {
  while (x > half || x < -half) {
    if (x > half) x = 2.0 * half - x;
    else x = -2.0 * half - x;
    v = -v;
  }
}

}  // namespace

void leapfrog_step(ChargedState& s, std::vector<Vec2>& forces, double dt, double softening, double box_side,
                   bool walls) {
  const std::size_t n = s.x.size();
  const double half = 0.5 * box_side;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) s.v[i][c] += 0.5 * dt * forces[i][c];
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) {
      s.x[i][c] += dt * s.v[i][c];
      if (walls) reflect(s.x[i][c], s.v[i][c], half);
    }
  forces = coulomb_forces(s, softening);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) s.v[i][c] += 0.5 * dt * forces[i][c];
}

Vec2 total_momentum(const ChargedState& s) {
  Vec2 p{0.0, 0.0};
  for (const auto& v : s.v) {
    p[0] += v[0];
    p[1] += v[1];
  }
  return p;
}

double total_energy(const ChargedState& s) {
  double e = 0.0;
  for (const auto& v : s.v) e += 0.5 * (v[0] * v[0] + v[1] * v[1]);
  for (std::size_t i = 0; i < s.x.size(); ++i)
    for (std::size_t j = i + 1; j < s.x.size(); ++j) {
      const double r = std::hypot(s.x[i][0] - s.x[j][0], s.x[i][1] - s.x[j][1]);
      e += static_cast<double>(s.q[i] * s.q[j]) / r;
    }
  return e;
}

ChargedState initial_charged_state(const ChargedConfig& config, std::uint64_t index) {
  config.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x43u};
  std::mt19937_64 rng(seq);
  std::bernoulli_distribution coin(0.5);
  const double quarter = 0.25 * config.box_side;
  std::uniform_real_distribution<double> pos(-quarter, quarter);
  std::normal_distribution<double> vel(0.0, config.init_speed_std);
  ChargedState s;
  for (std::size_t i = 0; i < config.n_particles; ++i) {
    s.q.push_back(coin(rng) ? 1 : -1);
    s.x.push_back({pos(rng), pos(rng)});
    s.v.push_back({vel(rng), vel(rng)});
  }
  return s;
}

Episode simulate_charged_from(const ChargedConfig& config, ChargedState state) {
  config.validate();
  const std::size_t n = state.x.size();
  if (state.v.size() != n || state.q.size() != n) throw ConfigError("charged state: inconsistent sizes");
  Episode ep;
  ep.kind = EpisodeKind::Charged;
  ep.dt = config.sample_dt;
  ep.charges = state.q;
  ep.positions = Tensor(Shape{config.n_steps, n, 2});
  auto record = [&](std::size_t t) {
    for (std::size_t i = 0; i < n; ++i) {
      ep.positions(t, i, 0) = state.x[i][0];
      ep.positions(t, i, 1) = state.x[i][1];
    }
  };
  auto forces = coulomb_forces(state, config.softening);
  const std::size_t inner = config.inner_steps_per_sample();
  record(0);
  for (std::size_t t = 1; t < config.n_steps; ++t) {
    for (std::size_t k = 0; k < inner; ++k)
      leapfrog_step(state, forces, config.inner_dt, config.softening, config.box_side, config.walls);
    record(t);
  }
  return ep;
}

Episode simulate_charged(const ChargedConfig& config, std::uint64_t index) {
  return simulate_charged_from(config, initial_charged_state(config, index));
}

std::vector<std::pair<std::string, ChargedConfig>> charged_variants(const ChargedConfig& base) {
  std::vector<std::pair<std::string, ChargedConfig>> out;
  ChargedConfig agents = base;
  agents.n_particles = 10;
  out.emplace_back("double_agents", agents);
  ChargedConfig half_dt = base;
  half_dt.sample_dt = 0.1;
  out.emplace_back("half_dt", half_dt);
  ChargedConfig half_box = base;
  half_box.box_side = 3.5;
  out.emplace_back("half_box", half_box);
  return out;
}

}  // namespace mate::sim
