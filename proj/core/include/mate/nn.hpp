#pragma once

#include <string>
#include <vector>

#include "mate/autodiff.hpp"
#include "mate/params.hpp"

namespace mate::nn {

/// y = x W + b with W [in][out], b [out].
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out);

  Var operator()(Tape& tape, const ParamStore& store, Var x) const;

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  ParamId weight() const { return weight_; }
  ParamId bias() const { return bias_; }

 private:
  ParamId weight_ = 0, bias_ = 0;
  std::size_t in_ = 0, out_ = 0;
};

/// Stack of Linear layers with tanh between them; the last layer is linear.
class Mlp {
 public:
  Mlp() = default;
  /// `sizes` = {in, hidden..., out}; registers "<prefix>/l<i>/W" and "/b".
  Mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& sizes);

  Var operator()(Tape& tape, const ParamStore& store, Var x) const;

  const std::vector<Linear>& layers() const { return layers_; }
  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }

 private:
  std::vector<Linear> layers_;
};

}  // namespace mate::nn
