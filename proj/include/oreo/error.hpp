#pragma once

#include <stdexcept>
#include <string>

namespace oreo {

// Every library error derives from Error so callers can catch the family.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct LinkingError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct CapacityError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct GenerationError : Error {
  using Error::Error;
};
// Non-finite values reached a loss or gradient.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace oreo
