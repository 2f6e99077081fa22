#pragma once

#include <stdexcept>

namespace nestseq {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Index or span outside the sentence.
struct BoundsError : Error {
  using Error::Error;
};

// Dimension mismatch between containers that must agree.
struct ShapeError : Error {
  using Error::Error;
};

// Tag sequence violates the IOBES adjacency rules.
struct WellFormednessError : Error {
  using Error::Error;
};

// Two same-type mentions overlap without one containing the other.
struct CrossingEntityError : Error {
  using Error::Error;
};

// Unparseable, truncated or otherwise malformed file content.
struct FormatError : Error {
  using Error::Error;
};

// File declares a schema version this build does not support.
struct VersionError : Error {
  using Error::Error;
};

// Unusable configuration or input.
struct ConfigError : Error {
  using Error::Error;
};

// Training diverged or hit a numeric failure.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace nestseq
