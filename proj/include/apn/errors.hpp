#ifndef APN_ERRORS_HPP_
#define APN_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace apn {

// Violated precondition or invariant (bad argument, non-partition groups...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Tensor shapes that cannot be combined.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& what) : ContractError(what) {}
};

// Missing/unreadable/malformed files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace apn

#endif  // APN_ERRORS_HPP_
