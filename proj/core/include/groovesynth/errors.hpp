#pragma once

#include <stdexcept>
#include <string>

namespace groovesynth {

enum class ErrorKind {
  InvalidTopology,
  DegenerateBone,
  MissingRoot,
  TooShortClip,
  NoBeatsFound,
  ShapeMismatch,
  EmptyBeats,
  IndexOutOfRange,
  CoverageError,
  TooFewSegments,
  NonFiniteLoss,
  DegenerateCorpus,
  ManifestError,
  FormatError,
  MissingCheckpoint,
  TooShortSeed,
  TooShortAudio,
  ConfigError,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace groovesynth
