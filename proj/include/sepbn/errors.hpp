#pragma once

#include <stdexcept>
#include <string>

namespace sepbn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, bad index, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Batch too small to define a variance (N*H*W < 2).
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

// Eval-mode BatchNorm on a branch whose running statistics were never updated.
class UninitializedStatisticsError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing dataset files.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Raised by the finite-difference oracle when it meets a non-finite value.
class OracleFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace sepbn
