#ifndef SACNN_DATA_IO_HPP_
#define SACNN_DATA_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sacnn/density.hpp"
#include "sacnn/tensor.hpp"

namespace sacnn {

/// One dataset record: a grayscale image in [0,1] plus head-center points.
struct AnnotatedImage {
  std::string id;
  Tensor image;  // (1, 1, H, W)
  std::vector<HeadPoint> heads;
};

struct Dataset {
  std::vector<AnnotatedImage> images;
  std::string provenance;
};

/// Reads a JSONL manifest ({"id", "image", "heads": [[x,y],...]} per line).
/// Image paths are resolved relative to the manifest's directory. Bounds are
/// validated eagerly; failures name the offending manifest line.
Dataset load_dataset(const std::filesystem::path& manifest);

/// Grayscale image from an 8-bit PGM (P5) or PNG file, scaled to [0,1].
/// RGB PNGs are converted by luma (0.299 R + 0.587 G + 0.114 B).
Tensor read_image(const std::filesystem::path& path);

/// 8-bit PGM (P5) writer; values clamped to [0,1] and quantized to 255 levels.
void write_pgm8(const Tensor& image, const std::filesystem::path& path);

/// Deterministic synthetic crowd scenes: heads drawn uniformly with a 4 px
/// minimum separation and rendered as dark discs (radius 2, dip 0.5) on a
/// light noisy background. The head list is the exact ground truth driving
/// the render.
Dataset synth_generate(std::uint64_t seed, int n_images, int height, int width,
                       int min_count, int max_count);

/// Persists manifest + PGM images under `dir`. Refuses to overwrite an
/// existing manifest unless `force` is set.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                   bool force);

/// Round-trip counterpart of write_dataset.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace sacnn

#endif  // SACNN_DATA_IO_HPP_
