#ifndef SACNN_LAYERS_HPP_
#define SACNN_LAYERS_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "sacnn/tensor.hpp"

namespace sacnn {

/// Same-padded convolution, stride 1, odd kernel (1 or 3). Implemented as
/// cross-correlation, the usual deep-learning convention.
struct ConvLayer {
  Tensor weights;             // (c_out, c_in, k, k)
  std::vector<double> bias;   // length c_out

  int out_channels() const { return weights.shape().n; }
  int in_channels() const { return weights.shape().c; }
  int kernel() const { return weights.shape().h; }
  int padding() const { return (kernel() - 1) / 2; }
};

ConvLayer make_conv(int c_in, int c_out, int kernel, Rng& rng, double stddev);

/// 2x2 max pooling. Stride 2 halves the spatial dims (even dims required);
/// stride 1 pads one implicit -inf row/column at bottom/right so the output
/// keeps the input's spatial size.
struct MaxPoolLayer {
  int stride = 2;  // 1 or 2
};

/// Pairing of a pooling forward result with the argmax routing needed by the
/// matching backward call.
struct MaxPoolContext {
  Shape input_shape{};
  std::vector<std::int64_t> argmax;  // flat input offset per output element
};

/// Learnable 2x2 stride-2 transposed convolution, no bias. Each input pixel
/// scatters value * kernel into a disjoint 2x2 output block.
struct DeconvLayer {
  Tensor weights;  // (c_in, c_out, 2, 2)

  int in_channels() const { return weights.shape().n; }
  int out_channels() const { return weights.shape().c; }
};

DeconvLayer make_deconv(int c_in, int c_out, double init_value);

/// Gradients of the scalar <grad_output, output> w.r.t. a layer's operands.
struct LayerGrads {
  Tensor grad_input;
  Tensor grad_weights;
  std::vector<double> grad_bias;
};

Tensor conv_forward(const Tensor& input, const ConvLayer& layer);
LayerGrads conv_backward(const Tensor& input, const ConvLayer& layer,
                         const Tensor& grad_output);

std::pair<Tensor, MaxPoolContext> maxpool_forward(const Tensor& input,
                                                  const MaxPoolLayer& layer);
Tensor maxpool_backward(const MaxPoolContext& ctx, const Tensor& grad_output);

Tensor deconv_forward(const Tensor& input, const DeconvLayer& layer);
LayerGrads deconv_backward(const Tensor& input, const DeconvLayer& layer,
                           const Tensor& grad_output);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

/// Stacks b's channels after a's. Inverse of split_channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& t, int c_a);

/// Finite-difference gradient checks: compare analytic gradients of a random
/// linear functional of the layer output against central differences over
/// every input element and parameter. Returns the worst relative error.
double grad_check_conv(const ConvLayer& layer, const Tensor& input, Rng& rng,
                       double eps = 1e-5);
double grad_check_deconv(const DeconvLayer& layer, const Tensor& input, Rng& rng,
                         double eps = 1e-5);
double grad_check_maxpool(const MaxPoolLayer& layer, const Tensor& input, Rng& rng,
                          double eps = 1e-5);
double grad_check_relu(const Tensor& input, Rng& rng, double eps = 1e-5);
double grad_check_concat(const Tensor& a, const Tensor& b, Rng& rng,
                         double eps = 1e-5);

/// Relative error with a small floor so agreement on near-zero gradients is
/// not reported as failure.
double relative_error(double analytic, double numeric);

}  // namespace sacnn

#endif  // SACNN_LAYERS_HPP_
