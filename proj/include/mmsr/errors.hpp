#pragma once

// Error taxonomy shared across the library. The CLI maps these to exit codes.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmsr {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad call-site values: shape mismatches, invalid factors, empty inputs.
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(what) {}
};

// Invalid ModelConfig / TrainConfig.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Malformed file content; carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

// Misuse of the recorded graph (double backward, detached loss).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(what) {}
};

// Training diverged; carries the epoch at which the loss became non-finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  explicit TrainingError(const std::string& what) : Error(what), epoch_(-1) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace mmsr
