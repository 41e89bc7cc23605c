#pragma once

#include <stdexcept>
#include <string>

namespace kbwalk {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An id or surface string that is not present in an index.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Corpus or snapshot content could not be used.
class CorpusError : public Error {
 public:
  using Error::Error;
};

/// Failure inside an embedding, inference or entailment backend.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what, int attempts = 1)
      : Error(what), attempts_(attempts) {}

  /// Number of attempts made before giving up (remote providers retry).
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace kbwalk
