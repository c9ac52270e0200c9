#pragma once

#include <stdexcept>
#include <string>

namespace veil {

// Bad user-facing configuration (resolution, chunk length, ratios, paths).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Frame directories and manifests that cannot be read.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a loss term turns non-finite; names the offending term.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric/adversary preconditions (empty sets, single-class data, ...).
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace veil
