#pragma once

#include <string>
#include <vector>

namespace gpa {

/// A named numeric check. `value` is the measured gap (or signed excess for
/// one-sided bounds); the check passes when value <= tolerance.
struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline Check make_check(std::string name, double value, double tolerance) {
  return {std::move(name), value, tolerance, value <= tolerance};
}

inline bool all_passed(const std::vector<Check>& checks) {
  for (const Check& c : checks)
    if (!c.passed) return false;
  return true;
}

}  // namespace gpa
