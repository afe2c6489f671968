#pragma once

#include <stdexcept>
#include <string>

namespace merf {

// Input that is well-formed I/O but violates a format or consistency rule.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace merf
