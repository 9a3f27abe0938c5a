#pragma once

#include <stdexcept>
#include <string>

namespace stagerl {

// Malformed caller input: bad shapes, unparseable files, out-of-domain values.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input that parses but cannot support the requested computation
// (rank-deficient regression data, too few samples, ...).
struct DegenerateData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration (files, flags, cross-field checks).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse detected at runtime (e.g. backward pass without a forward pass).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Integrated state left the representable range (NaN/inf).
struct SimulationDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A training loss went non-finite; carries the offending value.
struct TrainingDiverged : std::runtime_error {
  double loss_value;
  TrainingDiverged(const std::string& what, double loss)
      : std::runtime_error(what), loss_value(loss) {}
};

// A pipeline stage exhausted its repeat budget without passing its gate.
struct GateAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stagerl
