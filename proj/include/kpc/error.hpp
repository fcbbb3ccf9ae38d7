#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kpc {

enum class ErrorKind {
  MalformedLine,
  SpanOutOfRange,
  SurfaceMismatch,
  MissingPair,
  UnlabeledInstance,
  InstanceNotInDocument,
  DimensionMismatch,
  EmptyTrainingSet,
  WindowSizeMismatch,
  TooFewInstances,
  SequenceTooShort,
  MissingPrediction,
  UnknownInstance,
  DuplicateKey,
  EmptyMatrix,
  InvalidPopulation,
  InvalidModel,
  Config,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::SpanOutOfRange: return "SpanOutOfRange";
    case ErrorKind::SurfaceMismatch: return "SurfaceMismatch";
    case ErrorKind::MissingPair: return "MissingPair";
    case ErrorKind::UnlabeledInstance: return "UnlabeledInstance";
    case ErrorKind::InstanceNotInDocument: return "InstanceNotInDocument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::WindowSizeMismatch: return "WindowSizeMismatch";
    case ErrorKind::TooFewInstances: return "TooFewInstances";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::MissingPrediction: return "MissingPrediction";
    case ErrorKind::UnknownInstance: return "UnknownInstance";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::InvalidPopulation: return "InvalidPopulation";
    case ErrorKind::InvalidModel: return "InvalidModel";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every library failure is reported as an `Error`. `line()` is the 1-based
/// input line for parser errors and 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::size_t line = 0)
      : std::runtime_error(format(kind, message, line)),
        kind_(kind),
        line_(line),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

  // Configuration problems map to exit code 2, everything else to 1.
  bool is_config_error() const noexcept {
    return kind_ == ErrorKind::Config || kind_ == ErrorKind::InvalidPopulation;
  }

 private:
  static std::string format(ErrorKind kind, const std::string& message, std::size_t line) {
    std::string out = to_string(kind);
    if (line != 0) out += " at line " + std::to_string(line);
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorKind kind_;
  std::size_t line_;
  std::string message_;
};

}  // namespace kpc
