#pragma once

#include <stdexcept>
#include <string>

namespace fedseq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter or batch dimensions disagree with the model layout.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite activations or parameters; carries the offending layer index
/// when one is known (-1 otherwise).
class OverflowError : public Error {
 public:
  OverflowError(const std::string& what, int layer) : Error(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A training run produced non-finite global parameters.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedseq
