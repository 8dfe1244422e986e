#include "mate/nn.hpp"

#include "mate/errors.hpp"

namespace mate::nn {

Linear::Linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out)
    : weight_(store.add_glorot(prefix + "/W", in, out)),
      bias_(store.add_zeros(prefix + "/b", Shape{out})),
      in_(in),
      out_(out) {}

Var Linear::operator()(Tape& tape, const ParamStore& store, Var x) const {
  return ad::add_bias(ad::matmul(x, tape.param(store, weight_)), tape.param(store, bias_));
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ConfigError("mlp " + prefix + ": needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(store, prefix + "/l" + std::to_string(i), sizes[i], sizes[i + 1]);
  }
}

Var Mlp::operator()(Tape& tape, const ParamStore& store, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](tape, store, x);
    if (i + 1 < layers_.size()) x = ad::tanh(x);
  }
  return x;
}

}  // namespace mate::nn
