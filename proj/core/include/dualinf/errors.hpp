#pragma once

#include <stdexcept>
#include <string>

namespace dualinf {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed frames, tag sequences, or length mismatches between paired data.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Tensor shape incompatibility.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Dataset files, manifests, and tokenizer files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint version/schema problems and inventory mismatches between models.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualinf
