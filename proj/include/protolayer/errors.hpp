#pragma once

#include <stdexcept>
#include <string>

namespace protolayer {

// Every error raised by the library carries a stable, machine-parsable class
// name. The CLI prints it as the first token of its one-line diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define PROTOLAYER_ERROR_CLASS(Name, Tag)                        \
  class Name : public Error {                                    \
   public:                                                       \
    using Error::Error;                                          \
    const char* kind() const noexcept override { return Tag; }   \
  };

PROTOLAYER_ERROR_CLASS(ShapeError, "ShapeError")
PROTOLAYER_ERROR_CLASS(ArgumentError, "ArgumentError")
PROTOLAYER_ERROR_CLASS(ConfigError, "ConfigError")
PROTOLAYER_ERROR_CLASS(DataError, "DataError")
PROTOLAYER_ERROR_CLASS(FormatError, "FormatError")
PROTOLAYER_ERROR_CLASS(NumericError, "NumericError")
PROTOLAYER_ERROR_CLASS(UsageError, "UsageError")

#undef PROTOLAYER_ERROR_CLASS

}  // namespace protolayer
