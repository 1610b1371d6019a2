#pragma once

#include <stdexcept>

namespace rtm {

// Fatal error categories; the CLI maps these to exit codes 1/2/3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rtm
