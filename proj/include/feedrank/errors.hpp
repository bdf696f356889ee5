#pragma once

#include <stdexcept>
#include <string>

namespace feedrank {

// Error taxonomy, mapped to process exit codes by the CLI:
//   0  success
//   1  usage_error / config_error  (bad invocation or bad configuration)
//   2  data_error / index_error / dimension_error  (malformed or inconsistent inputs)
//   3  numeric_error  (non-finite values, numeric-domain violations)

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct index_error : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace feedrank
