#pragma once

#include <stdexcept>
#include <string>

namespace cst {

// Exit codes used by the CLI: 0 ok, 2 config error, 3 data error,
// 4 numeric failure.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cst
