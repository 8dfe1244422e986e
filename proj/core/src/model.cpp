#include "mate/model.hpp"

#include "mate/errors.hpp"

namespace mate {

namespace {

const char* norm_name(EnergyGradientNorm n) { return n == EnergyGradientNorm::SystemSum ? "system_sum" : "per_agent"; }

EnergyGradientNorm norm_from(const std::string& s) {
  if (s == "per_agent") return EnergyGradientNorm::PerAgent;
  if (s == "system_sum") return EnergyGradientNorm::SystemSum;
  throw ConfigError("unknown energy gradient norm '" + s + "'");
}

InterAgentMethod method_from(const std::string& s) {
  if (s == "loss_term") return InterAgentMethod::LossTerm;
  if (s == "reserved") return InterAgentMethod::Reserved;
  throw ConfigError("unknown inter-agent method '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.num_edge_types != decoder.num_edge_types) {
    throw ConfigError("model: encoder and decoder disagree on the number of edge types");
  }
  if (encoder.t_obs != decoder.t_obs) throw ConfigError("model: encoder and decoder disagree on t_obs");
  if (encoder.input_dim != 2) throw ConfigError("model: only 2-D position inputs are supported");
}

nlohmann::json ModelConfig::to_json() const {
  const auto& e = encoder;
  const auto& d = decoder;
  return {{"seed", seed},
          {"encoder",
           {{"hidden_size", e.hidden_size},
            {"num_edge_types", e.num_edge_types},
            {"input_dim", e.input_dim},
            {"t_obs", e.t_obs},
            {"input_scale", e.input_scale}}},
          {"decoder",
           {{"hidden_size", d.hidden_size},
            {"energy_dim", d.energy_dim},
            {"num_edge_types", d.num_edge_types},
            {"dt", d.dt},
            {"t_obs", d.t_obs},
            {"t_pred", d.t_pred},
            {"gamma", d.gamma},
            {"beta", d.beta},
            {"alpha", d.alpha},
            {"fd_step_x", d.fd_step_x},
            {"fd_step_v", d.fd_step_v},
            {"constraint_subsample", d.constraint_subsample},
            {"position_scale", d.position_scale},
            {"velocity_scale", d.velocity_scale},
            {"inter_agent_method", d.inter_agent_method == InterAgentMethod::LossTerm ? "loss_term" : "reserved"},
            {"energy_gradient_norm", norm_name(d.energy_gradient_norm)}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      c.encoder.hidden_size = e.value("hidden_size", c.encoder.hidden_size);
      c.encoder.num_edge_types = e.value("num_edge_types", c.encoder.num_edge_types);
      c.encoder.input_dim = e.value("input_dim", c.encoder.input_dim);
      c.encoder.t_obs = e.value("t_obs", c.encoder.t_obs);
      c.encoder.input_scale = e.value("input_scale", c.encoder.input_scale);
    }
    if (j.contains("decoder")) {
      const auto& d = j.at("decoder");
      auto& o = c.decoder;
      o.hidden_size = d.value("hidden_size", o.hidden_size);
      o.energy_dim = d.value("energy_dim", o.energy_dim);
      o.num_edge_types = d.value("num_edge_types", o.num_edge_types);
      o.dt = d.value("dt", o.dt);
      o.t_obs = d.value("t_obs", o.t_obs);
      o.t_pred = d.value("t_pred", o.t_pred);
      o.gamma = d.value("gamma", o.gamma);
      o.beta = d.value("beta", o.beta);
      o.alpha = d.value("alpha", o.alpha);
      o.fd_step_x = d.value("fd_step_x", o.fd_step_x);
      o.fd_step_v = d.value("fd_step_v", o.fd_step_v);
      o.constraint_subsample = d.value("constraint_subsample", o.constraint_subsample);
      o.position_scale = d.value("position_scale", o.position_scale);
      o.velocity_scale = d.value("velocity_scale", o.velocity_scale);
      o.inter_agent_method = method_from(d.value("inter_agent_method", std::string("loss_term")));
      o.energy_gradient_norm = norm_from(d.value("energy_gradient_norm", std::string("per_agent")));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model config: ") + ex.what());
  }
  return c;
}

ModelConfig ModelConfig::make(std::size_t hidden, std::size_t edge_types, std::size_t t_obs, std::size_t t_pred,
                              double dt, double position_scale, double velocity_scale) {
  ModelConfig c;
  c.encoder.hidden_size = hidden;
  c.encoder.num_edge_types = edge_types;
  c.encoder.t_obs = t_obs;
  c.encoder.input_scale = position_scale;
  c.decoder.hidden_size = hidden;
  c.decoder.num_edge_types = edge_types;
  c.decoder.t_obs = t_obs;
  c.decoder.t_pred = t_pred;
  c.decoder.dt = dt;
  c.decoder.position_scale = position_scale;
  c.decoder.velocity_scale = velocity_scale;
  return c;
}

Model::Model(const ModelConfig& config) : config_(config), params_(config.seed) {
  config_.validate();
  encoder_ = std::make_unique<Encoder>(config_.encoder, params_);
  decoder_ = std::make_unique<Decoder>(config_.decoder, params_);
}

Model::Model(const ModelConfig& config, const ParamStore& params) : Model(config) { params_.assign(params); }

ForwardResult Model::forward(Tape& tape, const Episode& episode, RolloutMode mode) const {
  return forward(tape, params_, episode, mode);
}

ForwardResult Model::forward(Tape& tape, const ParamStore& params, const Episode& episode, RolloutMode mode) const {
  if (episode.positions.rank() != 3 || episode.positions.dim(2) != config_.encoder.input_dim) {
    throw ShapeError("model: episode positions " + shape_str(episode.positions.shape()) +
                     " do not match input dimension " + std::to_string(config_.encoder.input_dim));
  }
  const double dt = episode.dt > 0.0 ? episode.dt : config_.decoder.dt;
  ForwardResult r{encoder_->encode(tape, params, episode.positions), {}};
  r.rollout = decoder_->rollout(tape, params, episode.positions, dt, r.z, mode);
  return r;
}

std::pair<Tensor, Tensor> Model::predict_with_latent(const Episode& episode) const {
  Tape tape;
  tape.set_grad_enabled(false);
  auto r = forward(tape, episode, RolloutMode::Eval);
  return {r.rollout.future(), r.z.dense()};
}

Tensor Model::predict(const Episode& episode) const { return predict_with_latent(episode).first; }

void Model::save(const std::filesystem::path& path, nlohmann::json extra_meta) const {
  if (!extra_meta.is_object()) extra_meta = nlohmann::json::object();
  extra_meta["model"] = config_.to_json();
  save_checkpoint(path, params_, extra_meta);
}

std::unique_ptr<Model> Model::load(const std::filesystem::path& path, nlohmann::json* meta_out) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("model")) throw IoError("checkpoint " + path.string() + " has no model config");
  ModelConfig cfg = ModelConfig::from_json(ck.meta.at("model"));
  auto m = std::make_unique<Model>(cfg, ck.params);
  if (meta_out) *meta_out = std::move(ck.meta);
  return m;
}

}  // namespace mate
