#pragma once

#include <stdexcept>
#include <string>

namespace fxptrain {

// Exit codes used by the CLI when one of these escapes a subcommand.
// Library code throws; only tools/ maps exceptions to process exits.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 2
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 3
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 4
};

struct TraceError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 5
};

struct PlotError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 6
};

}  // namespace fxptrain
