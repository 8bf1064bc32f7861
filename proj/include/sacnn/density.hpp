#ifndef SACNN_DENSITY_HPP_
#define SACNN_DENSITY_HPP_

#include <filesystem>
#include <vector>

#include "sacnn/tensor.hpp"

namespace sacnn {

/// Head-center annotation in continuous pixel coordinates, origin top-left.
struct HeadPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Truncated-window Gaussian stamp, renormalized to sum exactly one.
struct GaussianKernel {
  double sigma = 0.0;
  int radius = 0;
  std::vector<double> window;  // (2*radius+1)^2, row-major

  int side() const { return 2 * radius + 1; }
};

GaussianKernel make_kernel(double sigma, int radius);

/// Non-negative 2-D field whose integral equals the rendered head count.
struct DensityMap {
  Tensor grid;              // (1, 1, H, W)
  double head_count = 0.0;  // integral target M
};

/// Window half-width used when none is given: ceil(3*sigma).
int default_radius(double sigma);

/// Stamps one renormalized Gaussian per head. Kernels clipped at the image
/// border are rescaled so every head contributes exactly 1 to the integral.
/// Accumulation order is fixed by sorting heads on (y, x), which makes the
/// result bitwise independent of the input ordering.
DensityMap render_density(std::vector<HeadPoint> points, int height, int width,
                          double sigma);

/// Block-sum reduction by `factor` per axis; preserves the integral exactly.
DensityMap downsample_sum(const DensityMap& map, int factor);

/// 16-bit PGM heatmap, linearly scaled so the max value maps to 65535. The
/// scale factor is recorded in the PGM comment line.
void write_density_pgm(const DensityMap& map, const std::filesystem::path& path);

}  // namespace sacnn

#endif  // SACNN_DENSITY_HPP_
