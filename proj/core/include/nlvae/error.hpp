#pragma once

#include <stdexcept>
#include <string>

namespace nlvae {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an op's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unresolvable configuration (bad scale, negative beta, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nlvae
