#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttspo {

// Precondition violations and malformed inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad experiment configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A labeling round that does not (yet) hold enough judgments.
class IncompleteRoundError : public std::runtime_error {
 public:
  IncompleteRoundError(std::size_t missing, const std::string& what)
      : std::runtime_error(what), missing_(missing) {}
  std::size_t missing() const { return missing_; }

 private:
  std::size_t missing_;
};

// Protocol violations such as reusing a consumed preference file.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ttspo
