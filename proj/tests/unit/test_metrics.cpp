#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mate/errors.hpp"
#include "mate/metrics.hpp"
#include "mate/sim_charged.hpp"
#include "mate/sim_socialnav.hpp"
#include "oracles.hpp"

using namespace mate;

namespace {

Tensor offset_by(const Tensor& base, double dx, double dy) {
  Tensor out = base;
  for (std::size_t i = 0; i < out.size(); i += 2) {
    out[i] += dx;
    out[i + 1] += dy;
  }
  return out;
}

Tensor one_hot_latent(const std::vector<std::size_t>& targets, std::size_t k_types, std::size_t k) {
  const std::size_t n = targets.size();
  Tensor z(Shape{n, n, k_types});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) z(i, j, k) = j == targets[i] ? 1.0 : 0.0;
  return z;
}

}  // namespace

TEST(Ade, Examples) {
  oracle::Gen g(1);
  const Tensor gt = g.tensor({4, 3, 2});
  EXPECT_EQ(ade(gt, gt), 0.0);
  EXPECT_NEAR(ade(offset_by(gt, 0.0, 2.0), gt), 2.0, 1e-12);
  Tensor two_steps(Shape{2, 1, 2});
  Tensor pred = two_steps;
  pred(0, 0, 0) = 1.0;
  pred(1, 0, 1) = 3.0;
  EXPECT_DOUBLE_EQ(ade(pred, two_steps), 2.0);
  EXPECT_THROW(ade(g.tensor({4, 3, 2}), g.tensor({4, 2, 2})), ShapeError);
}

TEST(Fde, Examples) {
  oracle::Gen g(2);
  const Tensor gt = g.tensor({3, 2, 2});
  EXPECT_EQ(fde(gt, gt), 0.0);
  Tensor pred = gt;
  pred(2, 0, 0) += 3.0;
  pred(2, 0, 1) += 4.0;
  EXPECT_DOUBLE_EQ(fde(pred, gt), 2.5);
  // Earlier steps do not matter.
  pred(0, 1, 0) += 100.0;
  pred(1, 0, 1) -= 50.0;
  EXPECT_DOUBLE_EQ(fde(pred, gt), 2.5);
  EXPECT_THROW(fde(g.tensor({3, 2, 2}), g.tensor({2, 2, 2})), ShapeError);
}

TEST(Ade, PermutationInvariant) {
  oracle::Gen g(3);
  const Tensor gt = g.tensor({5, 4, 2}), pred = g.tensor({5, 4, 2});
  const std::vector<std::size_t> perm{2, 3, 0, 1};
  Tensor pg(gt.shape()), pp(pred.shape());
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t c = 0; c < 2; ++c) {
        pg(t, a, c) = gt(t, perm[a], c);
        pp(t, a, c) = pred(t, perm[a], c);
      }
  EXPECT_NEAR(ade(pp, pg), ade(pred, gt), 1e-14);
  EXPECT_NEAR(fde(pp, pg), fde(pred, gt), 1e-14);
}

TEST(GraphAccuracy, OneHotOnTruthIsPerfect) {
  const std::vector<std::size_t> targets{3, 0, 0, 1, 2};
  EXPECT_EQ(graph_accuracy(one_hot_latent(targets, 4, 2), targets, 2), 1.0);
  EXPECT_EQ(predicted_targets(one_hot_latent(targets, 4, 2), 2), targets);
}

TEST(GraphAccuracy, UniformLatentBreaksTiesToLowestIndex) {
  const std::size_t n = 5;
  Tensor z(Shape{n, n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) z(i, j, 0) = 0.25;
  const auto pred = predicted_targets(z, 0);
  EXPECT_EQ(pred, (std::vector<std::size_t>{1, 0, 0, 0, 0}));
  const std::vector<std::size_t> targets{1, 0, 3, 0, 2};
  EXPECT_DOUBLE_EQ(graph_accuracy(z, targets, 0), 3.0 / 5.0);
}

TEST(GraphAccuracy, TwoAgentsAlwaysCorrect) {
  oracle::Gen g(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = g.tensor({2, 2, 3}, 0.0, 1.0);
    EXPECT_EQ(graph_accuracy(z, {1, 0}, g.index(0, 2)), 1.0);
  }
}

TEST(GraphAccuracy, RandomLatentMatchesChance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 5, draws = 10000;
  double sum = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    Tensor z(Shape{n, n, 1});
    for (double& v : z.data()) v = u(rng);
    std::vector<std::size_t> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = (i + 1 + rng() % (n - 1)) % n;
    const double acc = graph_accuracy(z, targets, 0);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    sum += acc;
  }
  const double p = 1.0 / (n - 1);
  const double sigma = std::sqrt(p * (1 - p) / n / draws);
  EXPECT_NEAR(sum / draws, p, 3 * sigma);
}

TEST(GraphAccuracy, RequiresTargets) {
  Episode ep;
  ep.positions = Tensor(Shape{3, 3, 2});
  ep.dt = 0.1;
  EXPECT_THROW(graph_accuracy(Tensor(Shape{3, 3, 1}), ep, 0), Error);
  EXPECT_THROW(graph_accuracy(Tensor(Shape{3, 3, 1}), std::vector<std::size_t>{1, 0}, 0), ShapeError);
  EXPECT_THROW(predicted_targets(Tensor(Shape{3, 3, 1}), 1), ShapeError);
}

TEST(SelectEdgeType, PicksTheMostAccurateType) {
  std::vector<Episode> eps(2);
  std::vector<Tensor> zs;
  for (std::size_t e = 0; e < 2; ++e) {
    eps[e].positions = Tensor(Shape{2, 3, 2});
    eps[e].dt = 0.1;
    eps[e].targets = std::vector<std::size_t>{2, 2, 0};
    Tensor z = one_hot_latent(*eps[e].targets, 3, 1);
    // Type 0 points every agent at its lowest neighbour instead.
    for (std::size_t i = 0; i < 3; ++i) z(i, i == 0 ? 1 : 0, 0) = 1.0;
    zs.push_back(z);
  }
  EXPECT_EQ(select_edge_type(zs, eps), 1u);
}

TEST(ConstantVelocity, LinearMotionIsExact) {
  Tensor pos(Shape{10, 2, 2});
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t i = 0; i < 2; ++i) {
      pos(t, i, 0) = 0.3 * static_cast<double>(t) + static_cast<double>(i);
      pos(t, i, 1) = -0.1 * static_cast<double>(t);
    }
  const Tensor pred = constant_velocity_baseline(pos, 6, 4);
  EXPECT_EQ(pred.shape(), (Shape{4, 2, 2}));
  EXPECT_NEAR(ade(pred, future_truth(pos, 6, 4)), 0.0, 1e-12);
}

TEST(ConstantVelocity, StationaryStaysStationary) {
  oracle::Gen g(6);
  Tensor pos(Shape{8, 3, 2});
  const Tensor start = g.tensor({3, 2});
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 6; ++i) pos[t * 6 + i] = start[i];
  const Tensor pred = constant_velocity_baseline(pos, 5, 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pred[t * 6 + i], start[i]);
  EXPECT_THROW(constant_velocity_baseline(pos, 1, 3), ConfigError);
}

TEST(Evaluate, ReportsMetricsAndGraphAccuracy) {
  ModelConfig mc = ModelConfig::make(6, 2, 4, 3, 0.25);
  Model model(mc);
  sim::SocialnavConfig sc;
  sc.t_total = 7;
  std::vector<Episode> eps;
  for (std::uint64_t i = 0; i < 4; ++i) eps.push_back(sim::simulate_socialnav(sc, i));
  EvalOptions opts;
  const EvalReport r = evaluate(model, eps, opts);
  EXPECT_EQ(r.n_episodes, 4u);
  EXPECT_EQ(r.n_agents, 5u);
  ASSERT_TRUE(r.graph_accuracy.has_value());
  ASSERT_TRUE(r.edge_type.has_value());
  EXPECT_GE(*r.graph_accuracy, 0.0);
  EXPECT_LE(*r.graph_accuracy, 1.0);
  EXPECT_GE(r.ade, 0.0);
  // Same numbers on a second pass and with threads.
  opts.threads = 3;
  const EvalReport r2 = evaluate(model, eps, opts);
  EXPECT_EQ(r.ade, r2.ade);
  EXPECT_EQ(r.fde, r2.fde);
  EXPECT_EQ(r.graph_accuracy, r2.graph_accuracy);

  // Manual ADE oracle.
  double acc = 0.0;
  for (const auto& ep : eps) acc += ade(model.predict(ep), future_truth(ep.positions, 4, 3));
  EXPECT_NEAR(r.ade, acc / 4.0, 1e-12);
}

TEST(Evaluate, ChargedHasNoGraphAccuracy) {
  Model model(ModelConfig::make(6, 2, 4, 3, 0.2));
  sim::ChargedConfig cc;
  cc.n_steps = 7;
  std::vector<Episode> eps{sim::simulate_charged(cc, 0), sim::simulate_charged(cc, 1)};
  const EvalReport r = evaluate(model, eps);
  EXPECT_FALSE(r.graph_accuracy.has_value());
  EXPECT_GT(r.baseline_ade, 0.0);
}

TEST(ZeroShot, OneRowPerVariantAndReproducibleBase) {
  Model model(ModelConfig::make(6, 2, 4, 3, 0.25));
  sim::SocialnavConfig sc;
  sc.t_total = 7;
  ZeroShotOptions zo;
  zo.episodes_per_variant = 2;
  const auto rows = zero_shot_eval(model, sc.to_json(), zo);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].variant, "base");
  EXPECT_EQ(rows[1].report.n_agents, 10u);
  const auto again = zero_shot_eval(model, sc.to_json(), zo);
  EXPECT_EQ(rows[0].report.ade, again[0].report.ade);
  EXPECT_EQ(rows[0].report.edge_type, rows[2].report.edge_type);

  std::vector<EvalReport> reports;
  for (const auto& r : rows) reports.push_back(r.report);
  const std::string csv = report_csv(reports);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(report_table(reports).find("double_speed"), std::string::npos);
}

TEST(ZeroShot, ChargedVariants) {
  Model model(ModelConfig::make(6, 2, 4, 3, 0.2));
  sim::ChargedConfig cc;
  cc.n_steps = 7;
  ZeroShotOptions zo;
  zo.episodes_per_variant = 1;
  auto gen = cc.to_json();
  const auto rows = zero_shot_eval(model, gen, zo);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].report.n_agents, 10u);
  EXPECT_DOUBLE_EQ(rows[3].generator["box_side"].get<double>(), 3.5);
  for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.report.ade));
}

TEST(Fingerprint, StableAndSensitive) {
  const nlohmann::json a{{"x", 1}, {"y", "z"}};
  EXPECT_EQ(config_fingerprint(a), config_fingerprint(a));
  EXPECT_EQ(config_fingerprint(a).size(), 16u);
  EXPECT_NE(config_fingerprint(a), config_fingerprint({{"x", 2}, {"y", "z"}}));
}
