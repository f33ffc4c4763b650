#pragma once

// End-to-end self-checks of the library against independent oracles: round
// trips, exhaustive searches, closed-form counts, finite differences. The
// CLI `selftest` subcommand runs them and exits nonzero on any failure.

#include <cstdint>
#include <string>
#include <vector>

namespace panoepi {

struct SelftestOptions {
  std::uint64_t seed = 42;
  int threads = 0;  // 0 keeps the current OpenMP setting
  // Test hook: corrupts one triplane feature value before the sampling
  // checks, which must make the suite fail.
  bool inject_fault = false;
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  std::string detail;
};

std::vector<CheckResult> run_acceptance_checks(const SelftestOptions& opts = {});

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace panoepi
