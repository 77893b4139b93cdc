#pragma once

#include <stdexcept>
#include <string>

namespace featadapt {

/// Shape or dimension mismatch between tensors/layers.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid argument value (non-finite data, bad label, bad config value).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File or serialization failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training aborted on a non-finite or exploding loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& message, double lr, long step)
      : std::runtime_error(message + " (lr=" + std::to_string(lr) +
                           ", step=" + std::to_string(step) + ")"),
        lr_(lr),
        step_(step) {}

  double lr() const { return lr_; }
  long step() const { return step_; }

 private:
  double lr_;
  long step_;
};

}  // namespace featadapt
