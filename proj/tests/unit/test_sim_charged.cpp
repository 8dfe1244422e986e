#include <gtest/gtest.h>

#include <cmath>

#include "mate/errors.hpp"
#include "mate/sim_charged.hpp"
#include "oracles.hpp"

using namespace mate;
using namespace mate::sim;

namespace {

ChargedConfig short_config(std::size_t n, std::size_t steps = 20) {
  ChargedConfig c;
  c.n_particles = n;
  c.n_steps = steps;
  return c;
}

double speed(const Vec2& v) { return std::hypot(v[0], v[1]); }

}  // namespace

TEST(Charged, SingleParticleAtRestStaysPut) {
  ChargedState s;
  s.x = {{0.7, -1.2}};
  s.v = {{0.0, 0.0}};
  s.q = {1};
  const Episode ep = simulate_charged_from(short_config(1, 30), s);
  ASSERT_EQ(ep.positions.shape(), (Shape{30, 1, 2}));
  for (std::size_t t = 0; t < 30; ++t) {
    EXPECT_EQ(ep.positions(t, 0, 0), 0.7);
    EXPECT_EQ(ep.positions(t, 0, 1), -1.2);
  }
}

TEST(Charged, MirrorSymmetricPairStaysMirrored) {
  ChargedState s;
  s.x = {{0.5, 0.25}, {-0.5, -0.25}};
  s.v = {{0.3, -0.8}, {-0.3, 0.8}};
  s.q = {1, 1};
  const Episode ep = simulate_charged_from(short_config(2, 100), s);
  for (std::size_t t = 0; t < 100; ++t)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(ep.positions(t, 0, c), -ep.positions(t, 1, c), 1e-9);
}

TEST(Charged, MomentumConservedWithoutWalls) {
  ChargedState s;
  s.x = {{-2.0, 0.1}, {2.0, -0.1}};
  s.v = {{0.2, 0.05}, {-0.1, 0.0}};
  s.q = {1, -1};
  const Vec2 p0 = total_momentum(s);
  auto f = coulomb_forces(s, 0.1);
  for (int i = 0; i < 10000; ++i) leapfrog_step(s, f, 1e-3, 0.1, 5.0, false);
  const Vec2 p1 = total_momentum(s);
  EXPECT_LT(std::hypot(p1[0] - p0[0], p1[1] - p0[1]), 1e-8);
}

TEST(Charged, EnergyConservedWithoutWallsOrSoftening) {
  ChargedState s;
  s.x = {{-1.0, 0.0}, {1.0, 0.0}};
  s.v = {{0.0, 0.4}, {0.0, -0.4}};
  s.q = {1, -1};
  const double e0 = total_energy(s);
  auto f = coulomb_forces(s, 0.1);
  double min_r = 1e9;
  for (int i = 0; i < 10000; ++i) {
    leapfrog_step(s, f, 1e-3, 0.1, 5.0, false);
    min_r = std::min(min_r, std::hypot(s.x[0][0] - s.x[1][0], s.x[0][1] - s.x[1][1]));
  }
  ASSERT_GT(min_r, 0.1);  // softening never engaged
  EXPECT_LT(std::abs(total_energy(s) - e0) / std::abs(e0), 1e-3);
}

TEST(Charged, ForcesFollowCoulombLaw) {
  ChargedState s;
  s.x = {{0.0, 0.0}, {2.0, 0.0}, {0.0, 0.05}};
  s.v.assign(3, {0.0, 0.0});
  s.q = {1, 1, -1};
  const auto f = coulomb_forces(s, 0.1);
  // Oracle: direct pairwise sum with the distance clamp.
  for (std::size_t i = 0; i < 3; ++i) {
    Vec2 expect{0.0, 0.0};
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double dx = s.x[i][0] - s.x[j][0], dy = s.x[i][1] - s.x[j][1];
      const double r = std::max(std::hypot(dx, dy), 0.1);
      expect[0] += s.q[i] * s.q[j] * dx / (r * r * r);
      expect[1] += s.q[i] * s.q[j] * dy / (r * r * r);
    }
    EXPECT_NEAR(f[i][0], expect[0], 1e-12 * std::max(1.0, std::abs(expect[0])));
    EXPECT_NEAR(f[i][1], expect[1], 1e-12 * std::max(1.0, std::abs(expect[1])));
  }
  // Like charges repel: particle 1 is pushed in +x by particle 0.
  EXPECT_GT(f[1][0], 0.0);
}

TEST(Charged, WallReflectionPreservesSpeed) {
  ChargedState s;
  s.x = {{2.4995, 0.0}};
  s.v = {{1.3, -0.7}};
  s.q = {1};
  const double v0 = speed(s.v[0]);
  auto f = coulomb_forces(s, 0.1);
  for (int i = 0; i < 5; ++i) leapfrog_step(s, f, 1e-3, 0.1, 5.0, true);
  EXPECT_LT(s.v[0][0], 0.0);
  EXPECT_NEAR(speed(s.v[0]), v0, 1e-12);
  EXPECT_LE(std::abs(s.x[0][0]), 2.5);
}

TEST(Charged, RandomEpisodesStayInsideTheBox) {
  const ChargedConfig cfg = short_config(5, 50);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Episode ep = simulate_charged(cfg, i);
    ASSERT_TRUE(ep.charges.has_value());
    for (int q : *ep.charges) EXPECT_TRUE(q == 1 || q == -1);
    for (double v : ep.positions.data()) EXPECT_LE(std::abs(v), 2.5 + 1e-12);
    EXPECT_DOUBLE_EQ(ep.dt, 0.2);
    ep.validate();
  }
}

TEST(Charged, InitialConditionsFollowStatedDistributions) {
  ChargedConfig cfg = short_config(5);
  int positive = 0, total = 0;
  double sum_v = 0.0, sum_v2 = 0.0;
  for (std::uint64_t i = 0; i < 400; ++i) {
    const ChargedState s = initial_charged_state(cfg, i);
    for (std::size_t p = 0; p < 5; ++p) {
      EXPECT_LE(std::abs(s.x[p][0]), 1.25);
      EXPECT_LE(std::abs(s.x[p][1]), 1.25);
      positive += s.q[p] > 0;
      ++total;
      for (double c : s.v[p]) {
        sum_v += c;
        sum_v2 += c * c;
      }
    }
  }
  const double n = 2.0 * total;
  const double frac = static_cast<double>(positive) / total;
  EXPECT_NEAR(frac, 0.5, 3 * std::sqrt(0.25 / total));
  EXPECT_NEAR(sum_v / n, 0.0, 3 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(sum_v2 / n), 0.5, 0.03);
}

TEST(Charged, DeterministicPerSeedAndIndex) {
  ChargedConfig cfg = short_config(4);
  cfg.seed = 99;
  EXPECT_EQ(simulate_charged(cfg, 3).positions, simulate_charged(cfg, 3).positions);
  EXPECT_FALSE(simulate_charged(cfg, 3).positions == simulate_charged(cfg, 4).positions);
  ChargedConfig other = cfg;
  other.seed = 100;
  EXPECT_FALSE(simulate_charged(cfg, 3).positions == simulate_charged(other, 3).positions);
}

TEST(Charged, VariantsChangeOneFieldEach) {
  const ChargedConfig base;
  const auto v = charged_variants(base);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].second.n_particles, 10u);
  EXPECT_DOUBLE_EQ(v[1].second.sample_dt, 0.1);
  EXPECT_DOUBLE_EQ(v[2].second.box_side, 3.5);
  EXPECT_EQ(v[0].second.box_side, base.box_side);
  EXPECT_EQ(v[1].second.n_particles, base.n_particles);
  EXPECT_EQ(v[2].second.sample_dt, base.sample_dt);
}

TEST(Charged, ConfigValidationAndJsonRoundTrip) {
  ChargedConfig c;
  c.inner_dt = 0.003;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ChargedConfig{};
  c.softening = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ChargedConfig{};
  c.seed = 12345;
  c.n_particles = 7;
  const ChargedConfig back = ChargedConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(c.inner_steps_per_sample(), 200u);
}
