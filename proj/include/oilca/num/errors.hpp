#pragma once

#include <stdexcept>
#include <string>

namespace oilca {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CategoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a training loop produces a non-finite loss or fails its
// improvement contract; carries the offending step/epoch in the message.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PrerequisiteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StalenessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace oilca
