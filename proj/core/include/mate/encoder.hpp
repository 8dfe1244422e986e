#pragma once

#include <cstddef>
#include <vector>

#include "mate/autodiff.hpp"
#include "mate/nn.hpp"
#include "mate/params.hpp"
#include "mate/tensor.hpp"

namespace mate {

struct EncoderConfig {
  std::size_t hidden_size = 64;
  std::size_t num_edge_types = 2;  // K
  std::size_t input_dim = 2;
  std::size_t t_obs = 80;
  /// Observed coordinates are centred on the scene centroid at the last
  /// observed step and divided by this before entering the node MLP.
  double input_scale = 1.0;

  void validate() const;
};

/// Ordered-pair layout shared by the encoder and decoder: for receiver i the
/// N-1 neighbours j != i occupy rows i*(N-1) .. i*(N-1)+N-2 in increasing j.
struct PairIndex {
  explicit PairIndex(std::size_t n_agents);

  std::size_t agents() const { return n; }
  std::size_t pairs() const { return receivers.size(); }
  std::size_t row(std::size_t i, std::size_t j) const { return i * (n - 1) + (j < i ? j : j - 1); }

  std::size_t n;
  std::vector<std::size_t> receivers;  // i per pair row
  std::vector<std::size_t> senders;    // j per pair row
};

/// Edge weights z[i][j][k], softmax-normalised over neighbours j for each
/// receiver i and edge type k. Stored as [N][N-1][K] in PairIndex order.
struct InteractionLatent {
  Var weights;
  std::size_t n_agents = 0;
  std::size_t num_types = 0;

  /// Weight as a Var [P][1] column for type k in pair order.
  Var type_column(std::size_t k) const;
  /// Dense [N][N][K] copy with zeros on the diagonal.
  Tensor dense() const;
};

/// Softmax over neighbours of pair-ordered logits [N(N-1)][K].
InteractionLatent normalize_pair_logits(Var pair_logits, std::size_t n_agents);

/// Softmax over neighbours of dense logits [N][N][K]; the diagonal is ignored.
InteractionLatent normalize_neighbors(Var dense_logits);

/// Multi-edge graph encoder: node MLP over each agent's observed track, one
/// node->edge->node->edge sweep, then one MLP per edge type producing a
/// scalar logit for every ordered pair.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, ParamStore& store);

  /// observed: [T][N][input_dim] with T >= t_obs; only the first t_obs steps are read.
  InteractionLatent encode(Tape& tape, const ParamStore& store, const Tensor& observed) const;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  nn::Mlp node_mlp_;
  nn::Mlp edge_mlp_;
  nn::Mlp node_refine_mlp_;
  std::vector<nn::Mlp> type_mlps_;
};

}  // namespace mate
