#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afsd/tensor/grad_check.hpp"

// The gradient-verification suite shared by `afsd gradcheck` and the
// acceptance tests. Cases are plain data so callers can add their own.
namespace afsd::verify {

struct Probe {
  std::vector<NamedTensor> point;
  ScalarFunction f;
};

struct SuiteCase {
  std::string name;
  std::string kind;  // "primitive" or "composite"
  std::function<Probe(std::mt19937_64&)> draw;
};

struct CaseResult {
  std::string name;
  std::string kind;
  double max_rel_error = 0.0;
  bool passed = false;
  int redraws = 0;     // points rejected as ill-conditioned
  std::string error;  // set when a probe threw
};

struct SuiteOptions {
  int points = 10;
  double step = 1e-3;
  double tolerance = 1e-4;
  std::uint64_t seed = 20240;
  // A point is redrawn while the central difference itself has not settled
  // there: some coordinate's estimates at step and step/2 differ by more
  // than convergence * tolerance (same relative measure). Only forward
  // values are used, so a wrong backward rule cannot be filtered out.
  // After max_redraws the point is used as is; 0 disables.
  double convergence = 0.25;
  int max_redraws = 50;
};

struct SuiteReport {
  std::vector<CaseResult> cases;
  double seconds = 0.0;
  bool passed() const;
  nlohmann::json to_json() const;
};

/// Every registered primitive plus the attention and loss composites.
std::vector<SuiteCase> default_suite();

SuiteReport run_suite(const std::vector<SuiteCase>& cases, const SuiteOptions& opt = {});

}  // namespace afsd::verify
