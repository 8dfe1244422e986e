#include "mate/decoder.hpp"

#include "mate/dataio.hpp"
#include "mate/errors.hpp"

namespace mate {

void DecoderConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("decoder.hidden_size must be >= 1");
  if (energy_dim < 1) throw ConfigError("decoder.energy_dim must be >= 1");
  if (num_edge_types < 1) throw ConfigError("decoder.num_edge_types must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("decoder.dt must be positive");
  if (t_obs < 2) throw ConfigError("decoder.t_obs must be >= 2");
  if (t_pred < 1) throw ConfigError("decoder.t_pred must be >= 1");
  if (!(fd_step_x > 0.0) || !(fd_step_v > 0.0)) throw ConfigError("decoder fd steps must be positive");
  if (!(constraint_subsample > 0.0 && constraint_subsample <= 1.0)) {
    throw ConfigError("decoder.constraint_subsample must be in (0,1]");
  }
  if (!(position_scale > 0.0) || !(velocity_scale > 0.0)) throw ConfigError("decoder input scales must be positive");
  if (inter_agent_method != InterAgentMethod::LossTerm) {
    throw ConfigError("decoder.inter_agent_method: only the loss-term integration is implemented");
  }
}

Tensor Rollout::positions() const {
  const std::size_t n = initial.dim(0);
  Tensor out(Shape{length(), n, 2});
  std::copy(initial.data().begin(), initial.data().end(), out.data().begin());
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const auto src = predictions[t].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * n * 2));
  }
  return out;
}

Tensor Rollout::future() const {
  const std::size_t n = initial.dim(0);
  if (length() <= t_obs) throw ShapeError("rollout has no predicted future");
  const std::size_t steps = length() - t_obs;
  Tensor out(Shape{steps, n, 2});
  for (std::size_t s = 0; s < steps; ++s) {
    const auto src = predictions[t_obs + s - 1].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(s * n * 2));
  }
  return out;
}

Decoder::Decoder(const DecoderConfig& config, ParamStore& store) : config_(config) {
  config_.validate();
  const std::size_t h = config_.hidden_size, de = config_.energy_dim;
  for (std::size_t k = 0; k < config_.num_edge_types; ++k) {
    msg_mlps_.emplace_back(store, "decoder/msg" + std::to_string(k), std::vector<std::size_t>{2 * h, h, h});
  }
  embed_mlp_ = nn::Mlp(store, "decoder/embed", {4, h, h});
  gru_input_ = nn::Linear(store, "decoder/gru/input", 2 * h, 3 * h);
  gru_hidden_ = nn::Linear(store, "decoder/gru/hidden", h, 3 * h);
  energy_mlp_ = nn::Mlp(store, "energy", {h, h, de});
  out_mlp_ = nn::Mlp(store, "out_head", {de + 4 + h, h, h, 2});
}

Var Decoder::messages(Tape& tape, const ParamStore& store, const InteractionLatent& z, Var h_prev) const {
  Tape::Scope scope(tape, "decoder/msg");
  const std::size_t n = z.n_agents;
  if (z.num_types != msg_mlps_.size()) {
    throw ShapeError("decoder: latent has " + std::to_string(z.num_types) + " edge types, decoder expects " +
                     std::to_string(msg_mlps_.size()));
  }
  const PairIndex idx(n);
  Var pair_in = ad::concat({ad::gather_rows(h_prev, idx.receivers), ad::gather_rows(h_prev, idx.senders)});
  Var total;
  for (std::size_t k = 0; k < msg_mlps_.size(); ++k) {
    Var msg = ad::mul_rows(ad::tanh(msg_mlps_[k](tape, store, pair_in)), z.type_column(k));
    total = total.valid() ? ad::add(total, msg) : msg;
  }
  return ad::scatter_add_rows(total, idx.receivers, n);
}

DecoderState Decoder::cell(Tape& tape, const ParamStore& store, const CellInputs& in, double dt) const {
  const std::size_t h = config_.hidden_size;
  DecoderState s;
  Var x_in = ad::scale(in.x_prev, 1.0 / config_.position_scale);
  Var v_in = ad::scale(in.v_prev, 1.0 / config_.velocity_scale);
  {
    Tape::Scope scope(tape, "decoder/gru");
    Var u = ad::tanh(embed_mlp_(tape, store, ad::concat({x_in, v_in})));
    Var gi = gru_input_(tape, store, ad::concat({u, in.msg}));
    Var gh = gru_hidden_(tape, store, in.h_prev);
    Var r = ad::sigmoid(ad::add(ad::slice(gi, 1, 0, h), ad::slice(gh, 1, 0, h)));
    Var update = ad::sigmoid(ad::add(ad::slice(gi, 1, h, 2 * h), ad::slice(gh, 1, h, 2 * h)));
    Var cand = ad::tanh(ad::add(ad::slice(gi, 1, 2 * h, 3 * h), ad::mul(r, ad::slice(gh, 1, 2 * h, 3 * h))));
    s.h = ad::add(cand, ad::mul(update, ad::sub(in.h_prev, cand)));
  }
  {
    Tape::Scope scope(tape, "energy");
    s.E = hooks_.energy ? hooks_.energy(in.x_prev, in.v_prev, s.h) : energy_mlp_(tape, store, s.h);
    s.e = ad::reduce_mean(s.E, 1);
  }
  {
    Tape::Scope scope(tape, "out_head");
    if (hooks_.displacement) {
      s.dx = hooks_.displacement(in.x_prev, in.v_prev, s.E);
    } else {
      Var energy_in = hooks_.zero_energy_into_output ? tape.constant(Tensor(s.E.shape())) : s.E;
      s.dx = out_mlp_(tape, store, ad::concat({energy_in, v_in, x_in, s.h}));
    }
    s.x = ad::add(in.x_prev, s.dx);
    s.v = ad::scale(s.dx, 1.0 / dt);
  }
  return s;
}

DecoderState Decoder::step(Tape& tape, const ParamStore& store, Var x_prev, Var v_prev, const InteractionLatent& z,
                           Var h_prev, double dt, StepContext* context) const {
  if (x_prev.shape() != v_prev.shape() || x_prev.shape().size() != 2 || x_prev.shape()[1] != 2 ||
      x_prev.shape()[0] != z.n_agents) {
    throw ShapeError("niem_step: kinematic inputs " + shape_str(x_prev.shape()) + "/" + shape_str(v_prev.shape()) +
                     " do not match " + std::to_string(z.n_agents) + " agents");
  }
  Var msg = messages(tape, store, z, h_prev);
  if (context) {
    context->x_prev = x_prev;
    context->v_prev = v_prev;
    context->h_prev = h_prev;
    context->msg = msg;
    context->dt = dt;
  }
  return cell(tape, store, CellInputs{x_prev, v_prev, msg, h_prev}, dt);
}

Rollout Decoder::rollout(Tape& tape, const ParamStore& store, const Tensor& positions, double dt,
                         const InteractionLatent& z, RolloutMode mode) const {
  const auto& s = positions.shape();
  if (s.size() != 3 || s[2] != 2) throw ShapeError("rollout: expected [T][N][2] positions, got " + shape_str(s));
  const std::size_t t_obs = config_.t_obs;
  const std::size_t n = s[1];
  std::size_t length = 0;
  if (mode == RolloutMode::Train) {
    if (s[0] < t_obs + 1) {
      throw ShapeError("rollout: train mode needs at least " + std::to_string(t_obs + 1) + " steps, got " +
                       std::to_string(s[0]));
    }
    length = s[0];
  } else {
    if (s[0] < t_obs) {
      throw ShapeError("rollout: eval mode needs at least " + std::to_string(t_obs) + " steps, got " +
                       std::to_string(s[0]));
    }
    length = t_obs + config_.t_pred;
  }
  if (n != z.n_agents) throw ShapeError("rollout: latent/episode agent count mismatch");

  // Ground truth is only consulted through step t_obs - 1.
  Tensor observed(Shape{t_obs, n, 2});
  std::copy_n(positions.data().begin(), t_obs * n * 2, observed.data().begin());
  const Tensor velocities = derive_velocities(observed, dt);

  auto gt_row = [&](const Tensor& src, std::size_t t) {
    Tensor row(Shape{n, 2});
    std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(t * n * 2), n * 2, row.data().begin());
    return row;
  };

  Rollout out;
  out.t_obs = t_obs;
  out.initial = gt_row(observed, 0);
  Var h = tape.constant(Tensor(Shape{n, config_.hidden_size}));
  Var x_model, v_model;
  for (std::size_t t = 1; t < length; ++t) {
    const bool forced = t <= t_obs;
    Var x_prev, v_prev;
    if (forced) {
      x_prev = tape.constant(gt_row(observed, t - 1));
      v_prev = tape.constant(gt_row(velocities, t == 1 ? 0 : t - 2));
    } else {
      x_prev = x_model;
      v_prev = v_model;
    }
    if (hooks_.reset_hidden) h = tape.constant(Tensor(Shape{n, config_.hidden_size}));
    StepContext ctx;
    ctx.step = t;
    DecoderState st = step(tape, store, x_prev, v_prev, z, h, dt, &ctx);
    out.predictions.push_back(st.x);
    out.teacher_forced.push_back(forced);
    out.contexts.push_back(ctx);
    out.states.push_back(st);
    h = st.h;
    x_model = st.x;
    v_model = st.v;
  }
  return out;
}

}  // namespace mate
