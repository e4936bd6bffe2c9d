#pragma once

#include <stdexcept>
#include <string>

namespace qclass {

// Base of every error the toolkit raises on purpose. The CLI maps each
// subclass onto its own exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command line or configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed, inconsistent or corrupted input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Training diverged or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qclass
