#pragma once

#include <stdexcept>
#include <string>

namespace sidlab {

// Non-finite or otherwise invalid numeric input.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse (wrong dimension, bad order, empty input, ...).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad experiment/solver configuration detected before any compute.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Estimated work exceeds the configured step cap.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A simulated state became non-finite.
struct ExplosionError : std::runtime_error {
  ExplosionError(const std::string& what, long long step_index)
      : std::runtime_error(what), step(step_index) {}
  long long step;
};

// Step-halving refinement did not reach the requested tolerance.
struct AccuracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iteration ran out of budget before meeting its residual tolerance.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double residual, int iters)
      : std::runtime_error(what), last_residual(residual), iterations(iters) {}
  double last_residual;
  int iterations;
};

// The grid does not cover the region where the density lives.
struct GridCoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sidlab
