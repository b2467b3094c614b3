#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace byzfl {

/// Outcome of one property over all of its generated cases. On failure, detail holds
/// the first counterexample.
struct PropertyResult {
    std::string name;
    bool passed = true;
    long cases = 0;
    std::string detail;
};

/// Property suites with fixed seeds. Each returns one result per property.
std::vector<PropertyResult> verify_geomed_suite();
std::vector<PropertyResult> verify_assumptions_suite();
std::vector<PropertyResult> verify_bounds_suite();

/// Runs "geomed", "assumptions", "bounds" or "all", prints one line per property and
/// the counterexample of each failure. Returns 0 iff every property passed.
int run_verify_suites(const std::string& suite, std::ostream& out);

} // namespace byzfl
