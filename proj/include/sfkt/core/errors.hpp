#pragma once

#include <stdexcept>
#include <string>

namespace sfkt {

/// Problem with user-supplied input (files, config, CLI arguments). The CLI
/// maps this to exit code 2.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training diverged (non-finite gradients). The trainer aborts the epoch
/// and records the diagnostic.
struct GradientError : std::runtime_error {
  explicit GradientError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sfkt
