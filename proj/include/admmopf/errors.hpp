#pragma once

#include <stdexcept>
#include <string>

namespace admmopf {

// Malformed or truncated case text. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("parse error at line " + std::to_string(line) +
                           ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Valid syntax, but a construct outside the supported subset
// (e.g. piecewise-linear generator costs).
class UnsupportedFeatureError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally invalid network (disconnected, no slack, isolated bus, ...).
class ModelError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A subproblem solve failed; carries the component that failed.
class SolverError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or activation during Q-network training.
class TrainingError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint file malformed or dimensionally incompatible.
class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace admmopf
