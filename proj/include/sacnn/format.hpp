#ifndef SACNN_FORMAT_HPP_
#define SACNN_FORMAT_HPP_

#include <string>

namespace sacnn {

/// Shortest decimal representation that round-trips the double exactly,
/// with exponent zero-padding stripped ("1e-06" -> "1e-6"). Used for all
/// emitted artifacts so re-runs produce byte-identical files.
std::string format_double(double value);

}  // namespace sacnn

#endif  // SACNN_FORMAT_HPP_
