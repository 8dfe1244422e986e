#pragma once

#include <functional>
#include <string>

#include "mate/autodiff.hpp"
#include "mate/params.hpp"
#include "mate/tensor.hpp"

namespace mate {

/// 1e-3 * max(1, |x|_inf): step used when no explicit step is given.
double default_fd_step(const Tensor& at);

/// Central-difference Jacobian of a tensor function, shape [out.size()][at.size()]:
///   J[p][q] = (f(x + h e_q)[p] - f(x - h e_q)[p]) / (2h).
Tensor fd_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, double h);

/// Same stencil recorded on the tape: both perturbed evaluations are graph
/// nodes, so the estimate is differentiable with respect to anything `f`
/// depends on (including `at` itself).
Var fd_jacobian(const std::function<Var(Var)>& f, Var at, double h);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|, floor) used by grad_check.
double relative_error(double analytic, double numeric, double floor = 1e-3);

/// Compares backward() gradients of a scalar function against central differences.
/// The function is rebuilt on a fresh tape for every evaluation.
GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& at, double tol,
                           double h = 1e-5);

/// Gradient check of a scalar loss with respect to the entries of `store`.
/// At most `max_entries_per_param` entries of each tensor are probed (evenly
/// strided); 0 probes them all. `store` is restored before returning.
GradCheckReport grad_check_params(ParamStore& store,
                                  const std::function<Var(Tape&, const ParamStore&)>& loss,
                                  double tol, double h = 1e-5,
                                  std::size_t max_entries_per_param = 0);

}  // namespace mate
