#pragma once

#include <stdexcept>
#include <string>

namespace qsm {

// Raised when an argument lies outside an operation's input domain
// (angle ranges, qubit counts, mismatched lengths, negative valuations...).
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace qsm
