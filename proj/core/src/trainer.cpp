#include "mate/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include "mate/constraints.hpp"
#include "mate/errors.hpp"

namespace mate {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("loss term ") + term + " is not finite");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw ConfigError("train.lr_decay_factor must be in (0,1)");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("train.lambda1/lambda2 must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
  if (threads < 1) throw ConfigError("train.threads must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"lr_decay_factor", lr_decay_factor},
          {"plateau_patience", plateau_patience},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"grad_clip", grad_clip},
          {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.threads = j.value("threads", c.threads);
  return c;
}

std::string loss_csv_header() { return "epoch,split,L_P,L_E,L_D,total,lr"; }

std::string loss_csv_row(const LossReport& r) {
  return std::to_string(r.epoch) + "," + r.split + "," + fmt(r.L_P) + "," + fmt(r.L_E) + "," + fmt(r.L_D) + "," +
         fmt(r.total) + "," + fmt(r.lr);
}

Var loss_position(Tape& tape, const Rollout& rollout, const Tensor& positions) {
  const auto& s = positions.shape();
  const std::size_t steps = rollout.predictions.size();
  if (s.size() != 3 || s[2] != 2 || s[0] != steps + 1 || s[1] != rollout.initial.dim(0) || steps == 0) {
    throw ShapeError("loss_position: rollout of " + std::to_string(steps) + " predicted steps does not align with " +
                     shape_str(s));
  }
  const std::size_t n = s[1];
  std::vector<Var> stacked;
  stacked.reserve(steps);
  for (const auto& p : rollout.predictions) stacked.push_back(ad::reshape(p, Shape{1, n * 2}));
  Tensor truth(Shape{steps, n * 2});
  std::copy(positions.data().begin() + static_cast<std::ptrdiff_t>(n * 2), positions.data().end(),
            truth.data().begin());
  Var all = ad::reshape(ad::concat(stacked), Shape{steps, n * 2});
  Var diff = ad::reshape(ad::sub(all, tape.constant(std::move(truth))), Shape{steps * n, 2});
  return ad::reduce_mean(ad::norm(diff, 1));
}

AdamState AdamState::for_params(const ParamStore& params) {
  AdamState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).shape());
    s.v.emplace_back(params.value(i).shape());
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params.value(i).shape() || state.m[i].shape() != params.value(i).shape()) {
      throw ShapeError("adam_step: shape mismatch for " + params.name(i));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g.data()) x *= s;
  }
  return norm;
}

EpisodeLoss episode_loss(const Model& model, const ParamStore& params, const Episode& episode,
                         const TrainConfig& config, std::uint64_t step_seed, bool want_grads) {
  Tape tape;
  tape.set_grad_enabled(want_grads);
  EpisodeLoss out;
  ForwardResult fwd;
  Var lp;
  try {
    fwd = model.forward(tape, params, episode, RolloutMode::Train);
    lp = loss_position(tape, fwd.rollout, episode.positions);
  } catch (const NumericError& e) {
    throw NumericError(std::string("L_P: ") + e.what());
  }
  out.L_P = lp.value().item();
  check_finite(out.L_P, "L_P");
  Var total = lp;
  const bool want_e = config.lambda1 > 0.0;
  const bool want_d = config.lambda2 > 0.0;
  if (want_e || want_d) {
    std::mt19937_64 rng(step_seed);
    const auto steps = select_constraint_steps(fwd.rollout.contexts.size(),
                                               model.config().decoder.constraint_subsample, rng);
    ConstraintReport rep;
    try {
      rep = constraint_losses(tape, model.decoder(), params, fwd.rollout, steps, want_e, want_d);
    } catch (const NumericError& e) {
      throw NumericError(std::string(want_e && want_d ? "L_E/L_D" : (want_e ? "L_E" : "L_D")) + ": " + e.what());
    }
    out.constraints_evaluated = true;
    if (want_e) {
      out.L_E = rep.inter_agent.value().item();
      check_finite(out.L_E, "L_E");
      total = ad::add(total, ad::scale(rep.inter_agent, config.lambda1));
    }
    if (want_d) {
      out.L_D = rep.intra_agent.value().item();
      check_finite(out.L_D, "L_D");
      total = ad::add(total, ad::scale(rep.intra_agent, config.lambda2));
    }
  }
  out.total = out.L_P + config.lambda1 * out.L_E + config.lambda2 * out.L_D;
  check_finite(out.total, "total");
  if (want_grads) {
    tape.backward(total);
    out.grads = tape.param_grads(params);
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
      if (!out.grads[i].all_finite()) throw NumericError("gradient of " + params.name(i) + " is not finite");
    }
  }
  return out;
}

namespace {

std::vector<EpisodeLoss> run_episodes(const Model& model, const ParamStore& params,
                                      std::span<const Episode> episodes, const std::vector<std::size_t>& order,
                                      const std::vector<std::uint64_t>& seeds, const TrainConfig& config,
                                      bool want_grads) {
  std::vector<EpisodeLoss> results(order.size());
  const std::size_t workers = std::min(config.threads, order.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < order.size(); ++k)
      results[k] = episode_loss(model, params, episodes[order[k]], config, seeds[k], want_grads);
    return results;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < order.size(); k += workers)
          results[k] = episode_loss(model, params, episodes[order[k]], config, seeds[k], want_grads);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace

LossReport evaluate_losses(const Model& model, std::span<const Episode> episodes, const TrainConfig& config,
                           std::uint64_t seed) {
  LossReport r;
  if (episodes.empty()) return r;
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> seeds(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) seeds[k] = mix(seed, k);
  const auto results = run_episodes(model, model.params(), episodes, order, seeds, config, false);
  for (const auto& e : results) {
    r.L_P += e.L_P;
    r.L_E += e.L_E;
    r.L_D += e.L_D;
  }
  const double n = static_cast<double>(results.size());
  r.L_P /= n;
  r.L_E /= n;
  r.L_D /= n;
  r.total = r.L_P + config.lambda1 * r.L_E + config.lambda2 * r.L_D;
  return r;
}

TrainResult train(Model& model, std::span<const Episode> train_set, std::span<const Episode> val_set,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw ConfigError("train: empty training split");
  if (val_set.empty()) throw ConfigError("train: empty validation split");

  TrainResult result;
  ParamStore& params = model.params();
  ParamStore best = params;
  AdamState adam = AdamState::for_params(params);
  double lr = config.lr;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::mt19937_64 shuffle_rng(mix(config.seed, 0x5348));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossReport tr;
    tr.epoch = epoch;
    tr.split = "train";
    tr.lr = lr;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::vector<std::uint64_t> seeds;
      for (auto idx : batch) seeds.push_back(mix(mix(config.seed, epoch), idx));
      auto results = run_episodes(model, params, train_set, batch, seeds, config, true);
      std::vector<Tensor> grads = std::move(results[0].grads);
      for (std::size_t k = 1; k < results.size(); ++k)
        for (std::size_t i = 0; i < grads.size(); ++i) {
          auto dst = grads[i].data();
          auto src = results[k].grads[i].data();
          for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += src[q];
        }
      const double inv = 1.0 / static_cast<double>(results.size());
      for (auto& g : grads)
        for (double& x : g.data()) x *= inv;
      clip_grad_norm(grads, config.grad_clip);
      adam_step(params, grads, adam, lr);
      for (const auto& r : results) {
        tr.L_P += r.L_P;
        tr.L_E += r.L_E;
        tr.L_D += r.L_D;
        if (r.constraints_evaluated) ++result.constraint_evaluations;
      }
    }
    const double n = static_cast<double>(order.size());
    tr.L_P /= n;
    tr.L_E /= n;
    tr.L_D /= n;
    tr.total = tr.L_P + config.lambda1 * tr.L_E + config.lambda2 * tr.L_D;

    LossReport va = evaluate_losses(model, val_set, config, mix(config.seed, 0x56414C));
    va.epoch = epoch;
    va.split = "val";
    va.lr = lr;
    result.log.push_back(tr);
    result.log.push_back(va);
    if (hooks.on_epoch) {
      hooks.on_epoch(tr);
      hooks.on_epoch(va);
    }

    if (va.L_P < best_val) {
      best_val = va.L_P;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
      if (hooks.checkpoint_path) {
        nlohmann::json meta = hooks.checkpoint_meta;
        meta["epoch"] = epoch;
        meta["val_L_P"] = va.L_P;
        meta["train"] = config.to_json();
        model.save(*hooks.checkpoint_path, meta);
      }
    } else if (++since_best >= config.plateau_patience) {
      lr *= config.lr_decay_factor;
      since_best = 0;
    }
  }
  if (result.best_epoch > 0) params.assign(best);
  result.best_val_L_P = best_val;
  result.final_lr = lr;
  return result;
}

}  // namespace mate
