#include "sacnn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sacnn {

std::string to_string(const Shape& s) {
  std::ostringstream out;
  out << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return out.str();
}

namespace {

void check_shape(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ShapeError("invalid shape " + to_string(s) + ": all extents must be >= 1");
  }
}

}  // namespace

int Rng::uniform_int(int lo, int hi) {
  if (lo > hi) throw ConfigError("uniform_int: empty range");
  const std::uint64_t span = std::uint64_t(hi) - std::uint64_t(lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return int(lo + std::int64_t(x % span));
}

double Rng::normal(double stddev) {
  if (!(stddev > 0.0)) throw ConfigError("normal: stddev must be > 0");
  if (has_spare_) {
    has_spare_ = false;
    return spare_ * stddev;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta) * stddev;
}

Tensor::Tensor(Shape shape) : shape_(shape) {
  check_shape(shape);
  data_.assign(std::size_t(shape.count()), 0.0);
}

Tensor tensor_fill(Shape shape, double value) {
  Tensor t(shape);
  for (auto& x : t.data()) x = value;
  return t;
}

Tensor tensor_randn(Shape shape, Rng& rng, double stddev) {
  if (!(stddev > 0.0)) throw ConfigError("tensor_randn: stddev must be > 0");
  Tensor t(shape);
  for (auto& x : t.data()) x = rng.normal(stddev);
  return t;
}

double tensor_sum(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.data()) acc += x;
  return acc;
}

}  // namespace sacnn
