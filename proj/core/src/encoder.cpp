#include "mate/encoder.hpp"

#include "mate/errors.hpp"

namespace mate {

void EncoderConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("encoder.hidden_size must be >= 1");
  if (num_edge_types < 1) throw ConfigError("encoder.num_edge_types must be >= 1");
  if (input_dim < 1) throw ConfigError("encoder.input_dim must be >= 1");
  if (t_obs < 2) throw ConfigError("encoder.t_obs must be >= 2");
  if (!(input_scale > 0.0)) throw ConfigError("encoder.input_scale must be positive");
}

PairIndex::PairIndex(std::size_t n_agents) : n(n_agents) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      receivers.push_back(i);
      senders.push_back(j);
    }
}

Var InteractionLatent::type_column(std::size_t k) const {
  const std::size_t p = n_agents * (n_agents - 1);
  Var flat = ad::reshape(weights, Shape{p, num_types});
  return ad::slice(flat, 1, k, k + 1);
}

Tensor InteractionLatent::dense() const {
  Tensor out(Shape{n_agents, n_agents, num_types});
  const Tensor& w = weights.value();
  const PairIndex idx(n_agents);
  for (std::size_t p = 0; p < idx.pairs(); ++p)
    for (std::size_t k = 0; k < num_types; ++k) out(idx.receivers[p], idx.senders[p], k) = w[p * num_types + k];
  return out;
}

InteractionLatent normalize_pair_logits(Var pair_logits, std::size_t n_agents) {
  if (n_agents < 2) throw ShapeError("normalize_neighbors: need at least 2 agents");
  const auto& s = pair_logits.shape();
  if (s.size() != 2 || s[0] != n_agents * (n_agents - 1)) {
    throw ShapeError("normalize_neighbors: expected [" + std::to_string(n_agents * (n_agents - 1)) +
                     "][K] logits, got " + shape_str(s));
  }
  const std::size_t k = s[1];
  Var grouped = ad::reshape(pair_logits, Shape{n_agents, n_agents - 1, k});
  return InteractionLatent{ad::softmax(grouped, 1), n_agents, k};
}

InteractionLatent normalize_neighbors(Var dense_logits) {
  const auto& s = dense_logits.shape();
  if (s.size() != 3 || s[0] != s[1]) {
    throw ShapeError("normalize_neighbors: expected [N][N][K] logits, got " + shape_str(s));
  }
  const std::size_t n = s[0], k = s[2];
  if (n < 2) throw ShapeError("normalize_neighbors: need at least 2 agents");
  const PairIndex idx(n);
  std::vector<std::size_t> rows;
  for (std::size_t p = 0; p < idx.pairs(); ++p) rows.push_back(idx.receivers[p] * n + idx.senders[p]);
  Var flat = ad::reshape(dense_logits, Shape{n * n, k});
  return normalize_pair_logits(ad::gather_rows(flat, std::move(rows)), n);
}

Encoder::Encoder(const EncoderConfig& config, ParamStore& store) : config_(config) {
  config_.validate();
  const std::size_t h = config_.hidden_size;
  const std::size_t in = config_.t_obs * config_.input_dim;
  node_mlp_ = nn::Mlp(store, "encoder/node", {in, h, h});
  edge_mlp_ = nn::Mlp(store, "encoder/edge", {2 * h, h, h});
  node_refine_mlp_ = nn::Mlp(store, "encoder/node_refine", {h, h, h});
  for (std::size_t k = 0; k < config_.num_edge_types; ++k) {
    type_mlps_.emplace_back(store, "encoder/edge_type" + std::to_string(k), std::vector<std::size_t>{3 * h, h, h, 1});
  }
}

InteractionLatent Encoder::encode(Tape& tape, const ParamStore& store, const Tensor& observed) const {
  const auto& s = observed.shape();
  if (s.size() != 3 || s[2] != config_.input_dim) {
    throw ShapeError("encode: expected [T][N][" + std::to_string(config_.input_dim) + "] input, got " +
                     shape_str(s));
  }
  const std::size_t t_obs = config_.t_obs;
  if (t_obs < 2 || s[0] < t_obs) {
    throw ShapeError("encode: need " + std::to_string(t_obs) + " observed steps, got " + std::to_string(s[0]));
  }
  const std::size_t n = s[1], d = s[2];
  if (n < 2) throw ShapeError("encode: need at least 2 agents, got " + std::to_string(n));

  Tape::Scope scope(tape, "encoder");
  std::vector<double> centre(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) centre[c] += observed(t_obs - 1, i, c) / static_cast<double>(n);
  Tensor tracks(Shape{n, t_obs * d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < t_obs; ++t)
      for (std::size_t c = 0; c < d; ++c)
        tracks(i, t * d + c) = (observed(t, i, c) - centre[c]) / config_.input_scale;

  const PairIndex idx(n);
  Var nodes = ad::tanh(node_mlp_(tape, store, tape.constant(std::move(tracks))));
  Var edge_in = ad::concat({ad::gather_rows(nodes, idx.receivers), ad::gather_rows(nodes, idx.senders)});
  Var edges = ad::tanh(edge_mlp_(tape, store, edge_in));
  Var pooled = ad::scale(ad::scatter_add_rows(edges, idx.receivers, n), 1.0 / static_cast<double>(n - 1));
  Var refined = ad::tanh(node_refine_mlp_(tape, store, pooled));
  Var edge2_in = ad::concat({ad::gather_rows(refined, idx.receivers), ad::gather_rows(refined, idx.senders), edges});

  std::vector<Var> logits;
  for (const auto& mlp : type_mlps_) logits.push_back(mlp(tape, store, edge2_in));
  return normalize_pair_logits(ad::concat(logits), n);
}

}  // namespace mate
