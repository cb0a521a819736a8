#pragma once

#include <stdexcept>
#include <string>

namespace admm_mpnn {

// Each category maps onto one C API status code (and CLI exit code).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, variant/model mismatch, out-of-range arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition (shapes, bijections, missing weights).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, singular systems, exhausted resampling budgets.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File system failures and malformed or mismatched files.
class IoError : public Error {
 public:
  using Error::Error;
};

#define ADMM_MPNN_REQUIRE(cond, msg)                                   \
  do {                                                                 \
    if (!(cond)) throw ::admm_mpnn::ContractError(std::string(msg));   \
  } while (0)

}  // namespace admm_mpnn
