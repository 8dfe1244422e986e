#include "mate/fd.hpp"

#include <algorithm>
#include <cmath>

#include "mate/errors.hpp"

namespace mate {

double default_fd_step(const Tensor& at) { return 1e-3 * std::max(1.0, at.max_abs()); }

Tensor fd_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, double h) {
  if (!(h > 0.0)) throw ConfigError("fd_jacobian: step must be positive");
  const std::size_t q_count = at.size();
  std::size_t p_count = 0;
  Tensor jac;
  for (std::size_t q = 0; q < q_count; ++q) {
    Tensor plus = at, minus = at;
    plus[q] += h;
    minus[q] -= h;
    const Tensor fp = f(plus);
    const Tensor fm = f(minus);
    if (!fp.all_finite() || !fm.all_finite()) throw NumericError("fd_jacobian: non-finite function value");
    if (q == 0) {
      p_count = fp.size();
      jac = Tensor(Shape{p_count, q_count});
    }
    if (fp.size() != p_count || fm.size() != p_count) throw ShapeError("fd_jacobian: output size changed");
    for (std::size_t p = 0; p < p_count; ++p) jac(p, q) = (fp[p] - fm[p]) / (2.0 * h);
  }
  return jac;
}

Var fd_jacobian(const std::function<Var(Var)>& f, Var at, double h) {
  if (!(h > 0.0)) throw ConfigError("fd_jacobian: step must be positive");
  Tape& tape = *at.tape();
  const Shape shape = at.shape();
  const std::size_t q_count = at.value().size();
  std::vector<Var> columns;
  for (std::size_t q = 0; q < q_count; ++q) {
    Tensor offset(shape);
    offset[q] = h;
    Var delta = tape.constant(offset);
    Var fp = f(ad::add(at, delta));
    Var fm = f(ad::sub(at, delta));
    Var col = ad::scale(ad::sub(fp, fm), 1.0 / (2.0 * h));
    columns.push_back(ad::reshape(col, Shape{col.value().size(), 1}));
  }
  return ad::concat(columns);
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& at, double tol, double h) {
  GradCheckReport report;
  {
    Tape tape;
    Var x = tape.leaf(at);
    Var y = f(tape, x);
    if (!y.shape().empty()) throw ShapeError("grad_check: function must be scalar-valued");
    tape.backward(y);
    report.analytic = x.grad();
  }
  auto value_at = [&](const Tensor& p) {
    Tape tape;
    tape.set_grad_enabled(false);
    Var x = tape.constant(p);
    return Tensor::scalar(f(tape, x).value().item());
  };
  report.numeric = fd_jacobian(value_at, at, h).reshaped(at.shape());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double e = relative_error(report.analytic[i], report.numeric[i]);
    if (e > report.max_rel_error || i == 0) {
      report.max_rel_error = e;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check_params(ParamStore& store,
                                  const std::function<Var(Tape&, const ParamStore&)>& loss,
                                  double tol, double h, std::size_t max_entries_per_param) {
  std::vector<Tensor> grads;
  {
    Tape tape;
    Var y = loss(tape, store);
    if (!y.shape().empty()) throw ShapeError("grad_check_params: loss must be scalar-valued");
    tape.backward(y);
    grads = tape.param_grads(store);
  }
  auto eval = [&]() {
    Tape tape;
    tape.set_grad_enabled(false);
    return loss(tape, store).value().item();
  };
  std::vector<double> analytic, numeric;
  for (ParamId id = 0; id < store.size(); ++id) {
    Tensor& value = store.value(id);
    const std::size_t n = value.size();
    const std::size_t stride =
        (max_entries_per_param == 0 || n <= max_entries_per_param) ? 1 : n / max_entries_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = value[i];
      value[i] = saved + h;
      const double fp = eval();
      value[i] = saved - h;
      const double fm = eval();
      value[i] = saved;
      analytic.push_back(grads[id][i]);
      numeric.push_back((fp - fm) / (2.0 * h));
    }
  }
  GradCheckReport report;
  report.analytic = Tensor::vector(analytic);
  report.numeric = Tensor::vector(numeric);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i]);
    if (e > report.max_rel_error || i == 0) {
      report.max_rel_error = e;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace mate
