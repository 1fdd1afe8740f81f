#pragma once

#include <stdexcept>
#include <string>

namespace lhgnn {

// Malformed input files (edge lists, feature matrices, checkpoints).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (ratios, decay rates, dimensions).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape mismatches; message names the operation and both shapes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: backward called twice, non-scalar loss, empty batch.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted on non-finite values; message carries diagnostics.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lhgnn
