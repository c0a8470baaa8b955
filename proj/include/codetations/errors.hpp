#pragma once

#include <stdexcept>
#include <string>

namespace codetations {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition (bad offsets, invalid edit,
// malformed input).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A repo-relative path was malformed or escaped the repository root.
class PathError : public Error {
 public:
  using Error::Error;
};

// Sidecar read/write failure. The message always names the file.
class StoreError : public Error {
 public:
  using Error::Error;
};

// Work was computed against a document version that is no longer current.
class StaleError : public Error {
 public:
  using Error::Error;
};

// The completion provider is missing, unreachable or returned garbage.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace codetations
