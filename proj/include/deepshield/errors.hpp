#pragma once

#include <stdexcept>
#include <string>

namespace deepshield {

// Every failure raised by the library derives from Error so the CLI can map
// categories onto exit codes without catching std::exception wholesale.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is invalid (bad field, unsatisfiable combination).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling an operation in a state where it is undefined.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A checkpoint or manifest could not be decoded.
class LoadError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values appeared during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A checkpoint does not match the configuration it is loaded against.
class MismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepshield
