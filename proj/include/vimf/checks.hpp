#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "vimf/grad_check.hpp"

namespace vimf {

struct CheckResult {
  int criterion = 0;
  std::string key;    // short role name printed in tables
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct GradCase {
  std::string name;
  double tol = 1e-6;  // 1e-4 for composites (scans, attention, blocks, models)
  std::function<GradCheckReport()> run;
};

// Every differentiable primitive, block variant and model variant at desk shapes.
std::vector<GradCase> gradient_cases(bool include_models = true);

struct AbSeedResult {
  std::uint64_t seed = 0;
  double free_accuracy = 0.0;
  double frozen_accuracy = 0.0;
};

struct CheckOptions {
  std::ostream* log = nullptr;  // progress and per-seed logs
};

CheckResult check_fft_oracle(const CheckOptions& opts = {});
CheckResult check_translation_invariance(const CheckOptions& opts = {});
CheckResult check_scan_equivalence(const CheckOptions& opts = {});
CheckResult check_discretization(const CheckOptions& opts = {});
CheckResult check_gradients(const CheckOptions& opts = {});
CheckResult check_accounting(const CheckOptions& opts = {});
CheckResult check_reductions(const CheckOptions& opts = {});
CheckResult check_desk_learning(const CheckOptions& opts = {});
CheckResult check_frequency_advantage(const CheckOptions& opts = {});
CheckResult check_checkpoint(const CheckOptions& opts = {});

using CheckFn = CheckResult (*)(const CheckOptions&);

struct CheckSpec {
  int criterion;
  const char* key;
  CheckFn fn;
};

const std::vector<CheckSpec>& all_checks();

// Runs one check, catching exceptions into a failed result and timing it.
CheckResult run_check(const CheckSpec& spec, const CheckOptions& opts = {});

}  // namespace vimf
