#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mate/constraints.hpp"
#include "mate/errors.hpp"
#include "mate/fd.hpp"
#include "oracles.hpp"

using namespace mate;

namespace {

DecoderConfig small_config() {
  DecoderConfig c;
  c.hidden_size = 6;
  c.energy_dim = 3;
  c.num_edge_types = 2;
  c.dt = 0.1;
  c.t_obs = 3;
  c.t_pred = 2;
  return c;
}

struct Fixture {
  explicit Fixture(DecoderConfig cfg = small_config(), std::uint64_t seed = 1, std::size_t n = 3)
      : store(seed), decoder(cfg, store), gen(seed), n_agents(n) {}

  Rollout roll(Tape& tape) {
    const Tensor pos = gen_positions();
    return decoder.rollout(tape, store, pos, decoder.config().dt,
                           normalize_neighbors(tape.constant(logits())), RolloutMode::Train);
  }
  Tensor gen_positions() {
    if (positions.size() == 1) positions = gen.tensor({5, n_agents, 2}, -1.5, 1.5);
    return positions;
  }
  Tensor logits() {
    if (z_logits.size() == 1) z_logits = gen.tensor({n_agents, n_agents, 2});
    return z_logits;
  }
  std::vector<std::size_t> all_steps(const Rollout& r) const {
    std::vector<std::size_t> s(r.contexts.size());
    std::iota(s.begin(), s.end(), 0);
    return s;
  }

  ParamStore store;
  Decoder decoder;
  oracle::Gen gen;
  std::size_t n_agents;
  Tensor positions, z_logits;
};

void scale_layer(ParamStore& store, const nn::Linear& layer, double c) {
  for (double& w : store.value(layer.weight()).data()) w *= c;
  for (double& b : store.value(layer.bias()).data()) b *= c;
}

// Energy features all equal to x . w, so the scalar energy is x . w too.
Var linear_probe(Var x, double w0, double w1, std::size_t features = 3) {
  Tape& t = *x.tape();
  Tensor w(Shape{2, features});
  for (std::size_t f = 0; f < features; ++f) {
    w(0, f) = w0;
    w(1, f) = w1;
  }
  return ad::matmul(x, t.constant(std::move(w)));
}

}  // namespace

TEST(EnergyGradient, ZeroEnergyHeadGivesZero) {
  Fixture f;
  scale_layer(f.store, f.decoder.energy_mlp().layers().back(), 0.0);
  Tape t;
  const Rollout r = f.roll(t);
  for (std::size_t i = 0; i < 3; ++i) {
    const Var g = energy_gradient(t, f.decoder, f.store, r.contexts[1], i);
    EXPECT_EQ(g.value().max_abs(), 0.0);
  }
  EXPECT_EQ(loss_inter_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item(), 0.0);
}

TEST(EnergyGradient, LinearProbeRecoversWeights) {
  Fixture f;
  f.decoder.hooks().energy = [](Var x, Var, Var) { return linear_probe(x, 3.0, 4.0); };
  Tape t;
  const Rollout r = f.roll(t);
  for (const auto& ctx : r.contexts)
    for (std::size_t i = 0; i < 3; ++i) {
      const Tensor g = energy_gradient(t, f.decoder, f.store, ctx, i).value();
      EXPECT_NEAR(g[0], 3.0, 1e-9);
      EXPECT_NEAR(g[1], 4.0, 1e-9);
    }
  EXPECT_NEAR(loss_inter_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item(), 5.0, 1e-6);
}

TEST(EnergyGradient, MatchesIndependentFiniteDifferenceOracle) {
  Fixture f;
  Tape t;
  const Rollout r = f.roll(t);
  const StepContext& ctx = r.contexts[2];
  const std::size_t agent = 1;
  const Tensor g = energy_gradient(t, f.decoder, f.store, ctx, agent).value();
  // Oracle: run the full cell for all agents with agent 1 shifted, read its energy.
  auto energy_at = [&](const Tensor& x1) {
    Tape o;
    Tensor x = ctx.x_prev.value();
    x(agent, 0) = x1[0];
    x(agent, 1) = x1[1];
    const auto st = f.decoder.cell(o, f.store,
                                   CellInputs{o.constant(x), o.constant(ctx.v_prev.value()),
                                              o.constant(ctx.msg.value()), o.constant(ctx.h_prev.value())},
                                   ctx.dt);
    return st.e.value()[agent];
  };
  const Tensor x0 = Tensor::vector({ctx.x_prev.value()(agent, 0), ctx.x_prev.value()(agent, 1)});
  const double h = 1e-6;
  for (std::size_t d = 0; d < 2; ++d) {
    Tensor p = x0, m = x0;
    p[d] += h;
    m[d] -= h;
    const double oracle = (energy_at(p) - energy_at(m)) / (2 * h);
    EXPECT_NEAR(g[d], oracle, 1e-4 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(EnergyGradient, RichardsonHalvingIsSecondOrder) {
  double estimates[3];
  const double steps[3] = {4e-2, 2e-2, 1e-2};
  for (int k = 0; k < 3; ++k) {
    DecoderConfig cfg = small_config();
    cfg.fd_step_x = steps[k];
    Fixture f(cfg, 2);
    Tape t;
    const Rollout r = f.roll(t);
    estimates[k] = energy_gradient(t, f.decoder, f.store, r.contexts[1], 0).value()[0];
  }
  const double d1 = std::abs(estimates[0] - estimates[1]);
  const double d2 = std::abs(estimates[1] - estimates[2]);
  // Error ~ C h^2: successive differences shrink by roughly 4.
  ASSERT_GT(d1, 0.0);
  EXPECT_LT(d2, d1 / 2.5);
}

TEST(MotionVariance, AllCoefficientsZeroGivesZero) {
  DecoderConfig cfg = small_config();
  cfg.gamma = cfg.beta = cfg.alpha = 0.0;
  Fixture f(cfg);
  Tape t;
  const Rollout r = f.roll(t);
  EXPECT_EQ(motion_variance(t, f.decoder, f.store, r.contexts[0], 0).value().max_abs(), 0.0);
  EXPECT_EQ(loss_intra_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item(), 0.0);
}

TEST(MotionVariance, BiasOnlyGivesConstantMatrix) {
  DecoderConfig cfg = small_config();
  cfg.gamma = cfg.beta = 0.0;
  cfg.alpha = 2.0;
  Fixture f(cfg);
  Tape t;
  const Rollout r = f.roll(t);
  const Tensor u = motion_variance(t, f.decoder, f.store, r.contexts[0], 2).value();
  EXPECT_EQ(u.shape(), (Shape{2, 2}));
  for (double v : u.data()) EXPECT_EQ(v, 2.0);
  EXPECT_NEAR(loss_intra_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item(), 4.0, 1e-12);
}

TEST(MotionVariance, RiggedHeadGivesDtIdentity) {
  DecoderConfig cfg = small_config();
  cfg.gamma = 0.0;
  cfg.beta = 1.0;
  Fixture f(cfg);
  const double dt = cfg.dt;
  f.decoder.hooks().displacement = [dt](Var, Var v, Var) { return ad::scale(v, dt); };
  Tape t;
  const Rollout r = f.roll(t);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor u = motion_variance(t, f.decoder, f.store, r.contexts[3], i).value();
    EXPECT_NEAR(u(0, 0), dt, 1e-9);
    EXPECT_NEAR(u(1, 1), dt, 1e-9);
    EXPECT_NEAR(u(0, 1), 0.0, 1e-9);
    EXPECT_NEAR(u(1, 0), 0.0, 1e-9);
  }
}

TEST(MotionVariance, PositionTermMatchesIndependentJacobian) {
  DecoderConfig cfg = small_config();
  cfg.gamma = 0.0;
  Fixture f(cfg, 3);
  Tape t;
  const Rollout r = f.roll(t);
  const StepContext& ctx = r.contexts[2];
  const std::size_t agent = 0;
  const Tensor u = motion_variance(t, f.decoder, f.store, ctx, agent).value();
  auto x_of_v = [&](const Tensor& v0) {
    Tape o;
    Tensor v = ctx.v_prev.value();
    v(agent, 0) = v0[0];
    v(agent, 1) = v0[1];
    const auto st = f.decoder.cell(o, f.store,
                                   CellInputs{o.constant(ctx.x_prev.value()), o.constant(v),
                                              o.constant(ctx.msg.value()), o.constant(ctx.h_prev.value())},
                                   ctx.dt);
    return Tensor::vector({st.x.value()(agent, 0), st.x.value()(agent, 1)});
  };
  const Tensor v0 = Tensor::vector({ctx.v_prev.value()(agent, 0), ctx.v_prev.value()(agent, 1)});
  const Tensor jac = fd_jacobian(x_of_v, v0, 1e-6);
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(u(d, c), jac(d, c), 1e-4 * std::max(1.0, std::abs(jac(d, c))));
}

TEST(MotionVariance, NestedTermMatchesIndependentMixedDerivative) {
  DecoderConfig cfg = small_config();
  cfg.beta = 0.0;
  Fixture f(cfg, 4);
  Tape t;
  const Rollout r = f.roll(t);
  const StepContext& ctx = r.contexts[1];
  const std::size_t agent = 1;
  const Tensor u = motion_variance(t, f.decoder, f.store, ctx, agent).value();
  auto e_of = [&](double dx0, double dx1, double dv0, double dv1) {
    Tape o;
    Tensor x = ctx.x_prev.value(), v = ctx.v_prev.value();
    x(agent, 0) += dx0;
    x(agent, 1) += dx1;
    v(agent, 0) += dv0;
    v(agent, 1) += dv1;
    const auto st = f.decoder.cell(
        o, f.store, CellInputs{o.constant(x), o.constant(v), o.constant(ctx.msg.value()), o.constant(ctx.h_prev.value())},
        ctx.dt);
    return st.e.value()[agent];
  };
  const double h = 1e-4;
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (int sd : {1, -1})
        for (int sc : {1, -1}) {
          const double ddx0 = d == 0 ? sd * h : 0.0, ddx1 = d == 1 ? sd * h : 0.0;
          const double ddv0 = c == 0 ? sc * h : 0.0, ddv1 = c == 1 ? sc * h : 0.0;
          acc += sd * sc * e_of(ddx0, ddx1, ddv0, ddv1);
        }
      const double oracle = acc / (4 * h * h);
      // Implementation uses the default relative step 1e-2, so O(h^2) truncation remains.
      EXPECT_NEAR(u(d, c), oracle, 5e-3 * std::max(1.0, std::abs(oracle)));
    }
}

TEST(ConstraintLosses, EmptyStepSetIsAnError) {
  Fixture f;
  Tape t;
  const Rollout r = f.roll(t);
  const std::vector<std::size_t> none;
  EXPECT_THROW(loss_inter_agent(t, f.decoder, f.store, r, none), ConfigError);
  EXPECT_THROW(loss_intra_agent(t, f.decoder, f.store, r, none), ConfigError);
}

TEST(ConstraintLosses, SingleAgentSingleStepIsTheNorm) {
  Fixture f;
  Tape t;
  const Rollout r = f.roll(t);
  const std::vector<std::size_t> one{2};
  // Mean over 3 agents of per-agent norms at step 2.
  double expect_e = 0.0, expect_d = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor g = energy_gradient(t, f.decoder, f.store, r.contexts[2], i).value();
    expect_e += std::hypot(g[0], g[1]) / 3.0;
    const Tensor u = motion_variance(t, f.decoder, f.store, r.contexts[2], i).value();
    double fro = 0.0;
    for (double v : u.data()) fro += v * v;
    expect_d += std::sqrt(fro) / 3.0;
  }
  EXPECT_NEAR(loss_inter_agent(t, f.decoder, f.store, r, one).value().item(), expect_e, 1e-12);
  EXPECT_NEAR(loss_intra_agent(t, f.decoder, f.store, r, one).value().item(), expect_d, 1e-12);
}

TEST(ConstraintLosses, FullSetIsMeanOfDisjointHalves) {
  Fixture f;
  Tape t;
  const Rollout r = f.roll(t);
  const std::vector<std::size_t> all{0, 1, 2, 3}, a{0, 2}, b{1, 3};
  const double full = loss_inter_agent(t, f.decoder, f.store, r, all).value().item();
  const double ha = loss_inter_agent(t, f.decoder, f.store, r, a).value().item();
  const double hb = loss_inter_agent(t, f.decoder, f.store, r, b).value().item();
  EXPECT_NEAR(full, 0.5 * (ha + hb), 1e-12);
}

TEST(ConstraintLosses, ScalingEnergyHeadScalesInterAgentLoss) {
  Fixture f;
  double base = 0.0;
  {
    Tape t;
    const Rollout r = f.roll(t);
    base = loss_inter_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item();
  }
  ASSERT_GT(base, 0.0);
  for (double c : {-2.0, 0.5, 3.0}) {
    Fixture g;
    g.positions = f.positions;
    g.z_logits = f.z_logits;
    scale_layer(g.store, g.decoder.energy_mlp().layers().back(), c);
    // Energy feeds the output head, so hold the trajectory fixed by routing zeros there.
    g.decoder.hooks().zero_energy_into_output = true;
    f.decoder.hooks().zero_energy_into_output = true;
    Tape t1, t2;
    const Rollout rf = f.roll(t1);
    const Rollout rg = g.roll(t2);
    const double lf = loss_inter_agent(t1, f.decoder, f.store, rf, f.all_steps(rf)).value().item();
    const double lg = loss_inter_agent(t2, g.decoder, g.store, rg, g.all_steps(rg)).value().item();
    EXPECT_NEAR(lg, std::abs(c) * lf, 1e-9 * std::max(1.0, lf));
    f.decoder.hooks().zero_energy_into_output = false;
  }
}

TEST(ConstraintLosses, PermutationInvariant) {
  Fixture f;
  Tape t;
  const Rollout r = f.roll(t);
  const double le = loss_inter_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item();
  const double ld = loss_intra_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item();

  const std::vector<std::size_t> perm{2, 0, 1};
  Fixture g;
  Tensor pos = f.gen_positions(), p(pos.shape());
  for (std::size_t s = 0; s < pos.dim(0); ++s)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t c = 0; c < 2; ++c) p(s, a, c) = pos(s, perm[a], c);
  const Tensor lg = f.logits();
  Tensor pl(lg.shape());
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t k = 0; k < 2; ++k) pl(a, b, k) = lg(perm[a], perm[b], k);
  g.positions = p;
  g.z_logits = pl;
  Tape t2;
  const Rollout rp = g.roll(t2);
  EXPECT_NEAR(loss_inter_agent(t2, g.decoder, g.store, rp, g.all_steps(rp)).value().item(), le, 1e-10);
  EXPECT_NEAR(loss_intra_agent(t2, g.decoder, g.store, rp, g.all_steps(rp)).value().item(), ld, 1e-10);
}

TEST(ConstraintLosses, SystemSumNormOption) {
  DecoderConfig cfg = small_config();
  cfg.energy_gradient_norm = EnergyGradientNorm::SystemSum;
  Fixture f(cfg);
  f.decoder.hooks().energy = [](Var x, Var, Var) { return linear_probe(x, 3.0, 4.0); };
  Tape t;
  const Rollout r = f.roll(t);
  // |sum of three [3,4] gradients| / 3 agents = 5.
  EXPECT_NEAR(loss_inter_agent(t, f.decoder, f.store, r, f.all_steps(r)).value().item(), 5.0, 1e-6);
}

TEST(ConstraintLosses, DifferentiableWithRespectToParameters) {
  DecoderConfig cfg = small_config();
  cfg.t_obs = 2;
  cfg.t_pred = 1;
  Fixture f(cfg, 5, 2);
  f.positions = f.gen.tensor({3, 2, 2}, -1.0, 1.0);
  const Tensor logits = f.logits();
  const Tensor pos = f.positions;
  auto loss = [&](Tape& t, const ParamStore& s) {
    const Rollout r =
        f.decoder.rollout(t, s, pos, cfg.dt, normalize_neighbors(t.constant(logits)), RolloutMode::Train);
    const std::vector<std::size_t> steps{0, 1};
    const auto rep = constraint_losses(t, f.decoder, s, r, steps, true, true);
    return ad::add(rep.inter_agent, rep.intra_agent);
  };
  const auto report = grad_check_params(f.store, loss, 1e-3, 1e-6, 3);
  EXPECT_TRUE(report.passed) << "max rel err " << report.max_rel_error;
}

TEST(ConstraintSteps, SubsampleSizesAndDeterminism) {
  std::mt19937_64 a(7), b(7);
  const auto s1 = select_constraint_steps(20, 0.25, a);
  const auto s2 = select_constraint_steps(20, 0.25, b);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(s1.size(), 5u);
  EXPECT_TRUE(std::is_sorted(s1.begin(), s1.end()));
  EXPECT_EQ(std::adjacent_find(s1.begin(), s1.end()), s1.end());
  std::mt19937_64 c(1);
  EXPECT_EQ(select_constraint_steps(3, 0.01, c).size(), 1u);
  EXPECT_EQ(select_constraint_steps(3, 1.0, c), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(select_constraint_steps(0, 0.5, c), ConfigError);
  EXPECT_THROW(select_constraint_steps(4, 0.0, c), ConfigError);
}
