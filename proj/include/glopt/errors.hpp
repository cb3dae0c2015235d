#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace glopt {

/// Fewer samples than a cubic interpolant needs.
class TooFewSamplesError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Interpolation system singular or too ill-conditioned to trust.
class ConditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling ran out of attempts.
class GenerationFailedError : public std::runtime_error {
 public:
  GenerationFailedError(std::size_t attempts, std::uint64_t seed)
      : std::runtime_error("function generation failed after " + std::to_string(attempts) +
                           " attempts (seed " + std::to_string(seed) + ")"),
        attempts_(attempts),
        seed_(seed) {}

  std::size_t attempts() const noexcept { return attempts_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::size_t attempts_;
  std::uint64_t seed_;
};

/// Non-finite value met in a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes incompatible for an autodiff op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checkpoint errors. Each failure mode has its own type.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CorruptManifestError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ShapeMismatchError : public CheckpointError {
 public:
  ShapeMismatchError(const std::string& tensor, const std::string& detail)
      : CheckpointError("shape mismatch for tensor '" + tensor + "': " + detail), tensor_(tensor) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

}  // namespace glopt
