#include "sacnn/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace sacnn {

GaussianKernel make_kernel(double sigma, int radius) {
  if (!(sigma > 0.0)) throw ConfigError("make_kernel: sigma must be > 0");
  if (radius < 0) throw ConfigError("make_kernel: radius must be >= 0");

  GaussianKernel kernel;
  kernel.sigma = sigma;
  kernel.radius = radius;
  const int side = kernel.side();
  kernel.window.assign(std::size_t(side) * side, 0.0);

  const double inv = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      const double w = std::exp(-(double(i) * i + double(j) * j) * inv);
      kernel.window[std::size_t(i + radius) * side + (j + radius)] = w;
      total += w;
    }
  }
  for (auto& w : kernel.window) w /= total;
  return kernel;
}

int default_radius(double sigma) {
  return int(std::ceil(3.0 * sigma));
}

DensityMap render_density(std::vector<HeadPoint> points, int height, int width,
                          double sigma) {
  if (height < 1 || width < 1) {
    throw ShapeError("render_density: image dims must be >= 1");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const HeadPoint& p = points[i];
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
      std::ostringstream msg;
      msg << "render_density: head " << i << " at (" << p.x << ", " << p.y
          << ") outside " << width << "x" << height << " image";
      throw DataError(msg.str());
    }
  }

  std::sort(points.begin(), points.end(), [](const HeadPoint& a, const HeadPoint& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });

  const GaussianKernel kernel = make_kernel(sigma, default_radius(sigma));
  const int r = kernel.radius;
  const int side = kernel.side();

  DensityMap map;
  map.grid = Tensor({1, 1, height, width});
  map.head_count = double(points.size());

  for (const HeadPoint& p : points) {
    const int cx = std::min(int(std::lround(p.x)), width - 1);
    const int cy = std::min(int(std::lround(p.y)), height - 1);

    const int y0 = std::max(cy - r, 0);
    const int y1 = std::min(cy + r, height - 1);
    const int x0 = std::max(cx - r, 0);
    const int x1 = std::min(cx + r, width - 1);

    // Renormalize over the clipped window so this head adds exactly 1.
    double mass = 0.0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        mass += kernel.window[std::size_t(y - cy + r) * side + (x - cx + r)];
      }
    }
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        map.grid.at(0, 0, y, x) +=
            kernel.window[std::size_t(y - cy + r) * side + (x - cx + r)] / mass;
      }
    }
  }
  return map;
}

DensityMap downsample_sum(const DensityMap& map, int factor) {
  if (factor < 1) throw ConfigError("downsample_sum: factor must be >= 1");
  const Shape s = map.grid.shape();
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("downsample_sum: dims " + to_string(s) +
                     " not divisible by factor " + std::to_string(factor));
  }
  DensityMap out;
  out.head_count = map.head_count;
  out.grid = Tensor({1, 1, s.h / factor, s.w / factor});
  for (int y = 0; y < s.h / factor; ++y) {
    for (int x = 0; x < s.w / factor; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          acc += map.grid.at(0, 0, y * factor + dy, x * factor + dx);
        }
      }
      out.grid.at(0, 0, y, x) = acc;
    }
  }
  return out;
}

void write_density_pgm(const DensityMap& map, const std::filesystem::path& path) {
  const Shape s = map.grid.shape();
  double peak = 0.0;
  for (double v : map.grid.data()) peak = std::max(peak, v);
  const double scale = peak > 0.0 ? 65535.0 / peak : 0.0;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "P5\n# scale " << scale << " (value = gray / scale)\n"
      << s.w << " " << s.h << "\n65535\n";
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const double v = map.grid.at(0, 0, y, x) * scale;
      const auto g = std::uint16_t(std::clamp(std::lround(v), 0l, 65535l));
      out.put(char(g >> 8));
      out.put(char(g & 0xff));
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace sacnn
