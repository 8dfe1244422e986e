#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "mate/dataio.hpp"
#include "mate/decoder.hpp"
#include "mate/encoder.hpp"
#include "mate/params.hpp"

namespace mate {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::uint64_t seed = 0;

  /// Checks both halves and their agreement on K and t_obs.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  /// Common settings for both halves; scales are derived from the extent of
  /// the scene (positions) and typical speed (velocities).
  static ModelConfig make(std::size_t hidden, std::size_t edge_types, std::size_t t_obs, std::size_t t_pred,
                          double dt, double position_scale = 1.0, double velocity_scale = 1.0);
};

struct ForwardResult {
  InteractionLatent z;
  Rollout rollout;
};

/// Encoder plus decoder sharing one parameter store.
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const ModelConfig& config, const ParamStore& params);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Encodes the first t_obs steps and decodes. Uses the episode's dt.
  ForwardResult forward(Tape& tape, const Episode& episode, RolloutMode mode) const;
  ForwardResult forward(Tape& tape, const ParamStore& params, const Episode& episode, RolloutMode mode) const;

  /// Predicted future [t_pred][N][2] without recording gradients.
  Tensor predict(const Episode& episode) const;
  /// Predicted future together with the dense latent [N][N][K].
  std::pair<Tensor, Tensor> predict_with_latent(const Episode& episode) const;

  const ModelConfig& config() const { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  const Encoder& encoder() const { return *encoder_; }
  const Decoder& decoder() const { return *decoder_; }
  Decoder& decoder() { return *decoder_; }

  /// Checkpoint with the model config stored under meta["model"].
  void save(const std::filesystem::path& path, nlohmann::json extra_meta = nlohmann::json::object()) const;
  static std::unique_ptr<Model> load(const std::filesystem::path& path, nlohmann::json* meta_out = nullptr);

 private:
  ModelConfig config_;
  ParamStore params_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
};

}  // namespace mate
