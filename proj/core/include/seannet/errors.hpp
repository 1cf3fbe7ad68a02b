#pragma once

#include <stdexcept>
#include <string>

namespace seannet {

// Tensor operands with incompatible shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input outside an operation's mathematical domain (zero-norm cosine,
// unreachable pose, out-of-range node id).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid world/model configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse: wrong call sequence or arguments a caller controls.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// Rejection sampling exhausted its retry budget.
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during optimization.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing key in a strict embedding table.
struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Goal not reachable in the topological graph.
struct NoPathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable artifact file.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace seannet
