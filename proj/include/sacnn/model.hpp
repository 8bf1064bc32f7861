#ifndef SACNN_MODEL_HPP_
#define SACNN_MODEL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sacnn/density.hpp"
#include "sacnn/layers.hpp"
#include "sacnn/tensor.hpp"

namespace sacnn {

enum class Variant { kSingleScale, kTwoScale, kScaleAdaptive };

Variant variant_from_string(std::string_view name);
std::string to_string(Variant v);

/// How conv weights are drawn at build time. kFixedStddev is the training
/// default; kFanInScaled (stddev = sqrt(2 / fan_in)) keeps activations at
/// unit scale, which the desk-scale overfit and gradient-check harnesses
/// need — with 0.01 weights eleven layers deep, activations underflow to
/// ~1e-12 and nothing downstream is exercisable.
enum class InitKind { kFixedStddev, kFanInScaled };

struct ModelConfig {
  Variant variant = Variant::kScaleAdaptive;
  // Channel widths: blocks 1-5 plus conv6_1.
  std::array<int, 6> widths = {64, 128, 256, 512, 512, 512};
  InitKind init = InitKind::kFixedStddev;
  double init_stddev = 0.01;

  /// "full" = VGG widths, "tiny" = (4,8,16,32,32,32) for tests.
  static ModelConfig preset(Variant variant, std::string_view name);

  /// Input dims must be divisible by this (8, or 16 for scale-adaptive).
  int admission_multiple() const;

  /// Stable digest of variant + widths, stored in checkpoints.
  std::uint64_t digest() const;
};

/// Density map at 1/8 input resolution plus its integral. count is computed
/// by tensor_sum on the grid, so the two agree bitwise.
struct Prediction {
  DensityMap density;
  double count = 0.0;
};

/// Mutable view of one named parameter tensor.
struct ParamRef {
  std::string name;
  Shape shape;
  std::span<double> values;
};

struct ParamCRef {
  std::string name;
  Shape shape;
  std::span<const double> values;
};

/// Per-parameter gradient buffers, aligned with ModelGraph::params() order.
struct GradStore {
  std::vector<std::vector<double>> values;
};

/// One SaCNN variant: an ordered execution plan over conv / relu / pool /
/// deconv / concat nodes with cached activations for backward.
class ModelGraph {
 public:
  struct Node {
    enum class Kind { kConv, kRelu, kPool, kDeconv, kConcat };
    Kind kind;
    std::string name;
    int in_a = -1;  // producing node index; -1 = network input
    int in_b = -1;  // second operand (concat only)
    int layer = -1; // index into the per-kind layer storage
  };

  ModelGraph(const ModelConfig& config, Rng& rng);

  /// Runs the graph on a single-channel image whose spatial dims are
  /// divisible by admission_multiple(). Caches activations for backward.
  Prediction forward(const Tensor& image);

  /// Gradients of density_grad . density + count_grad * count w.r.t. every
  /// parameter. count = sum of density cells, so count_grad fans out
  /// uniformly. Requires a cached forward.
  GradStore backward(const Tensor& grad_density, double grad_count);

  const ModelConfig& config() const { return config_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  int node_count(Node::Kind kind) const;

  /// Spatial shape of a named node's activation from the last forward.
  Shape activation_shape(std::string_view node_name) const;

  std::vector<ParamRef> params();
  std::vector<ParamCRef> params() const;
  std::int64_t parameter_count() const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static ModelGraph load_checkpoint(const std::filesystem::path& path,
                                    const ModelConfig& config);

 private:
  int add_conv(std::string name, int c_in, int c_out, int kernel, int input,
               Rng& rng);
  int add_relu(int input);
  int add_pool(std::string name, int stride, int input);
  int add_deconv(std::string name, int c_in, int c_out, int input);
  int add_concat(std::string name, int input_a, int input_b);
  double conv_stddev(int c_in, int kernel) const;

  ModelConfig config_;
  std::vector<Node> nodes_;
  std::vector<ConvLayer> convs_;
  std::vector<MaxPoolLayer> pools_;
  std::vector<DeconvLayer> deconvs_;

  // forward cache
  Tensor input_;
  std::vector<Tensor> outputs_;
  std::vector<MaxPoolContext> pool_ctx_;
  bool has_forward_ = false;
};

ModelGraph build_model(const ModelConfig& config, Rng& rng);

/// Center-crop to the largest multiple of m in each spatial dim.
Tensor crop_to_multiple(const Tensor& image, int m);

}  // namespace sacnn

#endif  // SACNN_MODEL_HPP_
