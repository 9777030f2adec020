#pragma once

#include <stdexcept>
#include <string>

namespace evifuse {

/// Dempster combination degenerated: the conflict between the two mass sets
/// reaches 1 and the renormalization 1/(1-conflict) is meaningless.
class TotalConflictError : public std::runtime_error {
 public:
  explicit TotalConflictError(const std::string& what_arg)
      : std::runtime_error(what_arg) {}
};

/// File or stream level failure (missing file, malformed record, ...).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what_arg)
      : std::runtime_error(what_arg) {}
};

}  // namespace evifuse
