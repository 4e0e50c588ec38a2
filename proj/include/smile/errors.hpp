#pragma once

#include <stdexcept>
#include <string>

namespace smile {

// Error classes map one-to-one onto CLI exit codes (see tools/smile.cpp).

/// A configuration value violates its documented range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The configuration is valid on its face but cannot be realized
/// (e.g. lesions that never fit inside the brain).
class InfeasibleConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed dataset/checkpoint/table file. `record` names the offending
/// record or section.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, const std::string& record, const std::string& what)
      : std::runtime_error(path + ": " + record + ": " + what), record_(record) {}
  [[nodiscard]] const std::string& record() const { return record_; }

 private:
  std::string record_;
};

/// NaN/Inf in a loss or parameter during training.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The evaluation segmentor finds no lesions in real abnormal images.
class EvalSegmentorDegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The evaluation segmentor never reached the minimum validation Dice.
class EvalSegmentorUndertrainedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smile
