#pragma once

#include <stdexcept>
#include <string>

namespace fbrank {

/// Bad input: malformed records, out-of-range parameters, contract violations.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failures: missing files, unwritable directories, lock contention.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace fbrank
