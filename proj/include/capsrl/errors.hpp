#pragma once

#include <stdexcept>
#include <string>

namespace capsrl {

// Error taxonomy mirroring the CLI exit-code contract:
//   SchemaError       -> exit 2 (bad config / invalid spec)
//   MissingInputError -> exit 3 (referenced file absent or unreadable)
//   InternalError     -> exit 4 (invariant breach; indicates a bug)
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(const std::string& what) : std::runtime_error(what) {}
};

class InternalError : public std::runtime_error {
 public:
  explicit InternalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace capsrl
