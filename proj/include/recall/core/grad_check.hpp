#pragma once

#include <functional>
#include <vector>

#include "recall/core/tape.hpp"

namespace recall {

// Scalar function of one tensor input, recorded on the given tape.
using ScalarFn = std::function<Var<double>(Tape<double>&, Var<double>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::vector<double> gradient;  // reverse-mode gradient at x
};

// Compares the reverse-mode gradient of f at x with central finite
// differences, coordinate by coordinate. Relative error per coordinate is
// |a - b| / max(|a|, |b|, floor); the floor makes coordinates whose gradient is
// exactly zero compare absolutely. Non-finite intermediates raise NumericError
// naming the primitive.
GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, double eps = 1e-6, double floor = 1e-8);

}  // namespace recall
