#pragma once

#include <string>
#include <vector>

#include "recall/task/example.hpp"

namespace recall {

struct VerificationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;

  bool ok() const;
  // Names of failed checks, comma separated ("" when all pass).
  std::string failures() const;
};

// Re-derives every generator postcondition from the raw tokens: prompt layout,
// token classes, mask alignment, and per task the uniqueness / segment /
// candidate-distinctness / position laws.
VerificationReport verify_example(const Example& e, const Vocabulary& vocab);

}  // namespace recall
