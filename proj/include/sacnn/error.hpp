#ifndef SACNN_ERROR_HPP_
#define SACNN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace sacnn {

// Shape/extent violations (tensor algebra contract breaks).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid arguments, flags or configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input data or file I/O.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (e.g. NaN loss).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API called out of order (e.g. backward before forward).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sacnn

#endif  // SACNN_ERROR_HPP_
