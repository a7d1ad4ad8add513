#include "groovesynth/errors.hpp"

namespace groovesynth {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidTopology: return "InvalidTopology";
    case ErrorKind::DegenerateBone: return "DegenerateBone";
    case ErrorKind::MissingRoot: return "MissingRoot";
    case ErrorKind::TooShortClip: return "TooShortClip";
    case ErrorKind::NoBeatsFound: return "NoBeatsFound";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyBeats: return "EmptyBeats";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::CoverageError: return "CoverageError";
    case ErrorKind::TooFewSegments: return "TooFewSegments";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::DegenerateCorpus: return "DegenerateCorpus";
    case ErrorKind::ManifestError: return "ManifestError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorKind::TooShortSeed: return "TooShortSeed";
    case ErrorKind::TooShortAudio: return "TooShortAudio";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace groovesynth
