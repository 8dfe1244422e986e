#include "mate/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mate/errors.hpp"

namespace mate {

namespace {

struct Perturbation {
  double dx[2] = {0.0, 0.0};
  double dv[2] = {0.0, 0.0};
};

// Per-agent block layout: [grad rows][nested rows][position rows].
constexpr std::size_t kGradRows = 4;     // d in {0,1} x sign
constexpr std::size_t kNestedRows = 16;  // c x sign_c x d x sign_d
constexpr std::size_t kPositionRows = 4; // c x sign_c

std::size_t grad_row(std::size_t d, int sign) { return d * 2 + (sign > 0 ? 0 : 1); }
std::size_t nested_row(std::size_t c, int sc, std::size_t d, int sd) {
  return ((c * 2 + (sc > 0 ? 0 : 1)) * 2 + d) * 2 + (sd > 0 ? 0 : 1);
}
std::size_t position_row(std::size_t c, int sc) { return c * 2 + (sc > 0 ? 0 : 1); }

double inf_norm(const Tensor& t) { return t.max_abs(); }

}  // namespace

StepConstraintTerms evaluate_step_constraints(Tape& tape, const Decoder& decoder, const ParamStore& store,
                                              const StepContext& ctx, std::span<const std::size_t> agents,
                                              bool want_energy_gradient, bool want_motion_variance) {
  const DecoderConfig& cfg = decoder.config();
  const std::size_t n = ctx.x_prev.shape()[0];
  for (auto a : agents)
    if (a >= n) throw ShapeError("constraint: agent index out of range");
  const double hx = cfg.fd_step_x * std::max(1.0, inf_norm(ctx.x_prev.value()));
  const double hv = cfg.fd_step_v * std::max(1.0, inf_norm(ctx.v_prev.value()));

  const bool use_grad = want_energy_gradient;
  const bool use_nested = want_motion_variance && cfg.gamma != 0.0;
  const bool use_position = want_motion_variance && cfg.beta != 0.0;

  std::vector<Perturbation> block;
  std::size_t grad_off = 0, nested_off = 0, position_off = 0;
  if (use_grad) {
    grad_off = block.size();
    block.resize(block.size() + kGradRows);
    for (std::size_t d = 0; d < 2; ++d)
      for (int s : {1, -1}) block[grad_off + grad_row(d, s)].dx[d] = s * hx;
  }
  if (use_nested) {
    nested_off = block.size();
    block.resize(block.size() + kNestedRows);
    for (std::size_t c = 0; c < 2; ++c)
      for (int sc : {1, -1})
        for (std::size_t d = 0; d < 2; ++d)
          for (int sd : {1, -1}) {
            auto& p = block[nested_off + nested_row(c, sc, d, sd)];
            p.dx[d] = sd * hx;
            p.dv[c] = sc * hv;
          }
  }
  if (use_position) {
    position_off = block.size();
    block.resize(block.size() + kPositionRows);
    for (std::size_t c = 0; c < 2; ++c)
      for (int sc : {1, -1}) block[position_off + position_row(c, sc)].dv[c] = sc * hv;
  }

  StepConstraintTerms out;
  out.step_x = hx;
  out.step_v = hv;
  const std::size_t a_count = agents.size();
  if (a_count == 0) throw ConfigError("constraint: empty agent set");
  if (block.empty()) {
    if (want_motion_variance) out.motion_variance = tape.constant(Tensor(Shape{a_count, 4}, cfg.alpha));
    return out;
  }

  const std::size_t per = block.size();
  const std::size_t rows = a_count * per;
  std::vector<std::size_t> source(rows);
  Tensor x_off(Shape{rows, 2}), v_off(Shape{rows, 2});
  for (std::size_t a = 0; a < a_count; ++a)
    for (std::size_t p = 0; p < per; ++p) {
      const std::size_t r = a * per + p;
      source[r] = agents[a];
      for (std::size_t c = 0; c < 2; ++c) {
        x_off(r, c) = block[p].dx[c];
        v_off(r, c) = block[p].dv[c];
      }
    }

  Tape::Scope scope(tape, "constraints");
  CellInputs in{ad::add(ad::gather_rows(ctx.x_prev, source), tape.constant(std::move(x_off))),
                ad::add(ad::gather_rows(ctx.v_prev, source), tape.constant(std::move(v_off))),
                ad::gather_rows(ctx.msg, source), ad::gather_rows(ctx.h_prev, source)};
  DecoderState st = decoder.cell(tape, store, in, ctx.dt);
  Var energy = ad::reshape(st.e, Shape{rows, 1});

  if (use_grad) {
    Tensor stencil(Shape{a_count * 2, rows});
    for (std::size_t a = 0; a < a_count; ++a)
      for (std::size_t d = 0; d < 2; ++d) {
        stencil(a * 2 + d, a * per + grad_off + grad_row(d, 1)) = 1.0 / (2.0 * hx);
        stencil(a * 2 + d, a * per + grad_off + grad_row(d, -1)) = -1.0 / (2.0 * hx);
      }
    out.energy_gradient = ad::reshape(ad::matmul(tape.constant(std::move(stencil)), energy), Shape{a_count, 2});
  }

  if (want_motion_variance) {
    Var u;
    if (use_nested) {
      Tensor stencil(Shape{a_count * 4, rows});
      const double w = 1.0 / (4.0 * hx * hv);
      for (std::size_t a = 0; a < a_count; ++a)
        for (std::size_t d = 0; d < 2; ++d)
          for (std::size_t c = 0; c < 2; ++c)
            for (int sc : {1, -1})
              for (int sd : {1, -1})
                stencil(a * 4 + d * 2 + c, a * per + nested_off + nested_row(c, sc, d, sd)) = sc * sd * w;
      u = ad::scale(ad::matmul(tape.constant(std::move(stencil)), energy), cfg.gamma);
    }
    if (use_position) {
      Tensor stencil(Shape{a_count * 4, rows * 2});
      const double w = 1.0 / (2.0 * hv);
      for (std::size_t a = 0; a < a_count; ++a)
        for (std::size_t d = 0; d < 2; ++d)
          for (std::size_t c = 0; c < 2; ++c)
            for (int sc : {1, -1})
              stencil(a * 4 + d * 2 + c, (a * per + position_off + position_row(c, sc)) * 2 + d) = sc * w;
      Var positions = ad::reshape(st.x, Shape{rows * 2, 1});
      Var term = ad::scale(ad::matmul(tape.constant(std::move(stencil)), positions), cfg.beta);
      u = u.valid() ? ad::add(u, term) : term;
    }
    if (!u.valid()) u = tape.constant(Tensor(Shape{a_count * 4, 1}));
    out.motion_variance = ad::add_scalar(ad::reshape(u, Shape{a_count, 4}), cfg.alpha);
  }
  return out;
}

Var energy_gradient(Tape& tape, const Decoder& decoder, const ParamStore& store, const StepContext& ctx,
                    std::size_t agent) {
  const std::size_t agents[] = {agent};
  auto terms = evaluate_step_constraints(tape, decoder, store, ctx, agents, true, false);
  return ad::reshape(terms.energy_gradient, Shape{2});
}

Var motion_variance(Tape& tape, const Decoder& decoder, const ParamStore& store, const StepContext& ctx,
                    std::size_t agent) {
  const std::size_t agents[] = {agent};
  auto terms = evaluate_step_constraints(tape, decoder, store, ctx, agents, false, true);
  return ad::reshape(terms.motion_variance, Shape{2, 2});
}

ConstraintReport constraint_losses(Tape& tape, const Decoder& decoder, const ParamStore& store,
                                   const Rollout& rollout, std::span<const std::size_t> steps,
                                   bool want_inter_agent, bool want_intra_agent) {
  if (steps.empty()) throw ConfigError("constraint losses: empty step set");
  ConstraintReport report;
  if (!want_inter_agent && !want_intra_agent) return report;
  const std::size_t n = rollout.initial.dim(0);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const bool system_sum = decoder.config().energy_gradient_norm == EnergyGradientNorm::SystemSum;

  Var sum_e, sum_d;
  double grad_norm_acc = 0.0, var_norm_acc = 0.0;
  for (std::size_t s : steps) {
    if (s >= rollout.contexts.size()) throw ShapeError("constraint losses: step index out of range");
    auto terms = evaluate_step_constraints(tape, decoder, store, rollout.contexts[s], all, want_inter_agent,
                                           want_intra_agent);
    if (want_inter_agent) {
      Var per_agent = ad::norm(terms.energy_gradient, 1);
      for (double v : per_agent.value().data()) grad_norm_acc += v;
      Var step_sum = system_sum ? ad::norm(ad::reduce_sum(terms.energy_gradient, 0)) : ad::reduce_sum(per_agent);
      sum_e = sum_e.valid() ? ad::add(sum_e, step_sum) : step_sum;
    }
    if (want_intra_agent) {
      Var per_agent = ad::norm(terms.motion_variance, 1);
      for (double v : per_agent.value().data()) var_norm_acc += v;
      Var step_sum = ad::reduce_sum(per_agent);
      sum_d = sum_d.valid() ? ad::add(sum_d, step_sum) : step_sum;
    }
  }
  const double denom = static_cast<double>(n * steps.size());
  if (want_inter_agent) report.inter_agent = ad::scale(sum_e, 1.0 / denom);
  if (want_intra_agent) report.intra_agent = ad::scale(sum_d, 1.0 / denom);
  report.mean_energy_gradient_norm = grad_norm_acc / denom;
  report.mean_motion_variance_norm = var_norm_acc / denom;
  report.steps_used = steps.size();
  return report;
}

Var loss_inter_agent(Tape& tape, const Decoder& decoder, const ParamStore& store, const Rollout& rollout,
                     std::span<const std::size_t> steps) {
  return constraint_losses(tape, decoder, store, rollout, steps, true, false).inter_agent;
}

Var loss_intra_agent(Tape& tape, const Decoder& decoder, const ParamStore& store, const Rollout& rollout,
                     std::span<const std::size_t> steps) {
  return constraint_losses(tape, decoder, store, rollout, steps, false, true).intra_agent;
}

std::vector<std::size_t> select_constraint_steps(std::size_t n, double fraction, std::mt19937_64& rng) {
  if (n == 0) throw ConfigError("select_constraint_steps: no steps available");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("select_constraint_steps: fraction must be in (0,1]");
  const auto count = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)),
                                             1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace mate
