#ifndef SACNN_TENSOR_HPP_
#define SACNN_TENSOR_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sacnn/error.hpp"

namespace sacnn {

/// Extents of a 4-D tensor: batch, channels, height, width.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t count() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Deterministic random source. mt19937_64 is fully specified by the
/// standard, and the uniform/normal transforms below are hand-rolled so
/// the same seed yields the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() {
    return double(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi], rejection-sampled to avoid modulo bias.
  int uniform_int(int lo, int hi);

  /// Gaussian(0, stddev^2) via Box-Muller.
  double normal(double stddev);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Dense row-major (n, c, h, w) array of doubles. Element (n,c,h,w) lives
/// at offset ((n*C + c)*H + h)*W + w.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled

  Shape shape() const { return shape_; }
  std::int64_t size() const { return std::int64_t(data_.size()); }

  std::int64_t offset(int n, int c, int h, int w) const {
    return ((std::int64_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  double& operator[](std::int64_t i) { return data_[i]; }
  double operator[](std::int64_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  Shape shape_{};
  std::vector<double> data_;
};

/// Tensor with every element equal to `value`.
Tensor tensor_fill(Shape shape, double value);

/// Tensor with i.i.d. Gaussian(0, stddev^2) elements.
Tensor tensor_randn(Shape shape, Rng& rng, double stddev);

/// Sum of all elements in a fixed linear scan order (deterministic across
/// runs; no pairwise reduction).
double tensor_sum(const Tensor& t);

}  // namespace sacnn

#endif  // SACNN_TENSOR_HPP_
