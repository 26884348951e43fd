#pragma once

#include <stdexcept>
#include <string>

namespace ictseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible grid/batch/parameter shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent run configuration. Maps to exit code 2 in the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Dataset/checkpoint manifest is syntactically or structurally broken.
class ManifestError : public IoError {
 public:
  using IoError::IoError;
};

// On-disk format version this build does not understand.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

// Non-finite loss or other unrecoverable failure inside the training loop.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace ictseg
