#include "recall/core/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace recall {
namespace {

double evaluate(const ScalarFn& f, const Tensor<double>& x) {
  Tape<double> tape;
  tape.set_check_finite(true);
  tape.set_grad_enabled(false);
  Var<double> out = f(tape, tape.constant(x));
  require(out.size() == 1, "grad_check: function must return a scalar");
  return out.item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, double eps, double floor) {
  require(eps > 0, "grad_check: eps must be positive");
  GradCheckResult result;
  {
    Tape<double> tape;
    tape.set_check_finite(true);
    Var<double> in = tape.variable(x);
    Var<double> out = f(tape, in);
    require(out.size() == 1, "grad_check: function must return a scalar");
    tape.backward(out);
    result.gradient = tape.has_grad(in.id) ? tape.grad(in.id) : std::vector<double>(x.size(), 0.0);
  }
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double up = evaluate(f, probe);
    probe.data[i] = orig - eps;
    const double down = evaluate(f, probe);
    probe.data[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = result.gradient[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    if (i == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic = analytic;
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace recall
