#include "sacnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sacnn {

namespace {

void check_conv_operands(const Tensor& input, const ConvLayer& layer) {
  const int k = layer.kernel();
  if (k != 1 && k != 3) {
    throw ShapeError("conv kernel must be 1 or 3, got " + std::to_string(k));
  }
  if (input.shape().c != layer.in_channels()) {
    throw ShapeError("conv channel mismatch: input has " +
                     std::to_string(input.shape().c) + " channels, layer expects " +
                     std::to_string(layer.in_channels()));
  }
}

void check_same_shape(const Shape& got, const Shape& want, const char* what) {
  if (!(got == want)) {
    throw ShapeError(std::string(what) + ": expected " + to_string(want) +
                     ", got " + to_string(got));
  }
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

ConvLayer make_conv(int c_in, int c_out, int kernel, Rng& rng, double stddev) {
  ConvLayer layer;
  layer.weights = tensor_randn({c_out, c_in, kernel, kernel}, rng, stddev);
  layer.bias.assign(std::size_t(c_out), 0.0);
  return layer;
}

DeconvLayer make_deconv(int c_in, int c_out, double init_value) {
  DeconvLayer layer;
  layer.weights = tensor_fill({c_in, c_out, 2, 2}, init_value);
  return layer;
}

Tensor conv_forward(const Tensor& input, const ConvLayer& layer) {
  check_conv_operands(input, layer);
  const Shape in = input.shape();
  const int k = layer.kernel();
  const int pad = layer.padding();
  Tensor out({in.n, layer.out_channels(), in.h, in.w});
  for (int n = 0; n < in.n; ++n) {
    for (int co = 0; co < layer.out_channels(); ++co) {
      const double b = layer.bias[std::size_t(co)];
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          double acc = b;
          for (int ci = 0; ci < in.c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int sy = y + ky - pad;
              if (sy < 0 || sy >= in.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int sx = x + kx - pad;
                if (sx < 0 || sx >= in.w) continue;
                acc += input.at(n, ci, sy, sx) * layer.weights.at(co, ci, ky, kx);
              }
            }
          }
          out.at(n, co, y, x) = acc;
        }
      }
    }
  }
  return out;
}

LayerGrads conv_backward(const Tensor& input, const ConvLayer& layer,
                         const Tensor& grad_output) {
  check_conv_operands(input, layer);
  const Shape in = input.shape();
  check_same_shape(grad_output.shape(),
                   {in.n, layer.out_channels(), in.h, in.w}, "conv grad_output");
  const int k = layer.kernel();
  const int pad = layer.padding();

  LayerGrads grads;
  grads.grad_input = Tensor(in);
  grads.grad_weights = Tensor(layer.weights.shape());
  grads.grad_bias.assign(layer.bias.size(), 0.0);

  for (int n = 0; n < in.n; ++n) {
    for (int co = 0; co < layer.out_channels(); ++co) {
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          const double g = grad_output.at(n, co, y, x);
          grads.grad_bias[std::size_t(co)] += g;
          for (int ci = 0; ci < in.c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int sy = y + ky - pad;
              if (sy < 0 || sy >= in.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int sx = x + kx - pad;
                if (sx < 0 || sx >= in.w) continue;
                grads.grad_weights.at(co, ci, ky, kx) += g * input.at(n, ci, sy, sx);
                grads.grad_input.at(n, ci, sy, sx) += g * layer.weights.at(co, ci, ky, kx);
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

std::pair<Tensor, MaxPoolContext> maxpool_forward(const Tensor& input,
                                                  const MaxPoolLayer& layer) {
  const Shape in = input.shape();
  if (layer.stride != 1 && layer.stride != 2) {
    throw ShapeError("maxpool stride must be 1 or 2");
  }
  if (layer.stride == 2 && (in.h % 2 != 0 || in.w % 2 != 0)) {
    throw ShapeError("maxpool stride 2 requires even spatial dims, got " + to_string(in));
  }
  const int oh = (layer.stride == 2) ? in.h / 2 : in.h;
  const int ow = (layer.stride == 2) ? in.w / 2 : in.w;

  Tensor out({in.n, in.c, oh, ow});
  MaxPoolContext ctx;
  ctx.input_shape = in;
  ctx.argmax.assign(std::size_t(out.size()), 0);

  std::int64_t oi = 0;
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < in.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++oi) {
          const int y0 = y * layer.stride;
          const int x0 = x * layer.stride;
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_off = -1;
          // Stride 1 pads an implicit -inf row/column at bottom/right, so
          // out-of-range window cells are simply skipped.
          for (int dy = 0; dy < 2; ++dy) {
            const int sy = y0 + dy;
            if (sy >= in.h) continue;
            for (int dx = 0; dx < 2; ++dx) {
              const int sx = x0 + dx;
              if (sx >= in.w) continue;
              const double v = input.at(n, c, sy, sx);
              if (v > best) {  // ties keep the first offset in scan order
                best = v;
                best_off = input.offset(n, c, sy, sx);
              }
            }
          }
          out[oi] = best;
          ctx.argmax[std::size_t(oi)] = best_off;
        }
      }
    }
  }
  return {std::move(out), std::move(ctx)};
}

Tensor maxpool_backward(const MaxPoolContext& ctx, const Tensor& grad_output) {
  if (std::size_t(grad_output.size()) != ctx.argmax.size()) {
    throw ShapeError("maxpool grad_output does not match the saved forward context");
  }
  Tensor grad_input(ctx.input_shape);
  for (std::int64_t i = 0; i < grad_output.size(); ++i) {
    grad_input[ctx.argmax[std::size_t(i)]] += grad_output[i];
  }
  return grad_input;
}

Tensor deconv_forward(const Tensor& input, const DeconvLayer& layer) {
  const Shape in = input.shape();
  if (in.c != layer.in_channels()) {
    throw ShapeError("deconv channel mismatch: input has " + std::to_string(in.c) +
                     " channels, layer expects " + std::to_string(layer.in_channels()));
  }
  Tensor out({in.n, layer.out_channels(), 2 * in.h, 2 * in.w});
  for (int n = 0; n < in.n; ++n) {
    for (int co = 0; co < layer.out_channels(); ++co) {
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          for (int ky = 0; ky < 2; ++ky) {
            for (int kx = 0; kx < 2; ++kx) {
              double acc = 0.0;
              for (int ci = 0; ci < in.c; ++ci) {
                acc += input.at(n, ci, y, x) * layer.weights.at(ci, co, ky, kx);
              }
              out.at(n, co, 2 * y + ky, 2 * x + kx) = acc;
            }
          }
        }
      }
    }
  }
  return out;
}

LayerGrads deconv_backward(const Tensor& input, const DeconvLayer& layer,
                           const Tensor& grad_output) {
  const Shape in = input.shape();
  if (in.c != layer.in_channels()) {
    throw ShapeError("deconv channel mismatch in backward");
  }
  check_same_shape(grad_output.shape(),
                   {in.n, layer.out_channels(), 2 * in.h, 2 * in.w},
                   "deconv grad_output");

  LayerGrads grads;
  grads.grad_input = Tensor(in);
  grads.grad_weights = Tensor(layer.weights.shape());

  for (int n = 0; n < in.n; ++n) {
    for (int ci = 0; ci < in.c; ++ci) {
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          const double v = input.at(n, ci, y, x);
          double gi = 0.0;
          for (int co = 0; co < layer.out_channels(); ++co) {
            for (int ky = 0; ky < 2; ++ky) {
              for (int kx = 0; kx < 2; ++kx) {
                const double g = grad_output.at(n, co, 2 * y + ky, 2 * x + kx);
                gi += g * layer.weights.at(ci, co, ky, kx);
                grads.grad_weights.at(ci, co, ky, kx) += g * v;
              }
            }
          }
          grads.grad_input.at(n, ci, y, x) = gi;
        }
      }
    }
  }
  return grads;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::int64_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  check_same_shape(grad_output.shape(), input.shape(), "relu grad_output");
  Tensor grad_input(input.shape());
  for (std::int64_t i = 0; i < input.size(); ++i) {
    grad_input[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  }
  return grad_input;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat operands disagree: " + to_string(sa) + " vs " + to_string(sb));
  }
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    for (int c = 0; c < sa.c; ++c) {
      for (int y = 0; y < sa.h; ++y) {
        for (int x = 0; x < sa.w; ++x) out.at(n, c, y, x) = a.at(n, c, y, x);
      }
    }
    for (int c = 0; c < sb.c; ++c) {
      for (int y = 0; y < sa.h; ++y) {
        for (int x = 0; x < sa.w; ++x) out.at(n, sa.c + c, y, x) = b.at(n, c, y, x);
      }
    }
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, int c_a) {
  const Shape s = t.shape();
  if (c_a < 1 || c_a >= s.c) {
    throw ShapeError("split_channels: c_a must be in [1, c), got " + std::to_string(c_a));
  }
  Tensor a({s.n, c_a, s.h, s.w});
  Tensor b({s.n, s.c - c_a, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < c_a; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) a.at(n, c, y, x) = t.at(n, c, y, x);
      }
    }
    for (int c = c_a; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) b.at(n, c - c_a, y, x) = t.at(n, c, y, x);
      }
    }
  }
  return {std::move(a), std::move(b)};
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
  return std::fabs(analytic - numeric) / scale;
}

namespace {

// Central-difference sweep of one parameter buffer against its analytic
// gradient, for the scalar J = <probe, forward()>.
template <typename Forward>
double sweep_buffer(std::vector<double>& buf, const std::vector<double>& analytic,
                    const Tensor& probe, Forward&& forward, double eps) {
  double worst = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double orig = buf[i];
    buf[i] = orig + eps;
    const double jp = dot(forward(), probe);
    buf[i] = orig - eps;
    const double jm = dot(forward(), probe);
    buf[i] = orig;
    const double numeric = (jp - jm) / (2.0 * eps);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

}  // namespace

double grad_check_conv(const ConvLayer& layer, const Tensor& input, Rng& rng,
                       double eps) {
  ConvLayer probe_layer = layer;
  Tensor x = input;
  const Tensor probe = tensor_randn(conv_forward(x, probe_layer).shape(), rng, 1.0);
  const LayerGrads grads = conv_backward(x, probe_layer, probe);

  auto forward = [&] { return conv_forward(x, probe_layer); };
  double worst = sweep_buffer(x.data(), grads.grad_input.data(), probe, forward, eps);
  worst = std::max(worst, sweep_buffer(probe_layer.weights.data(),
                                       grads.grad_weights.data(), probe, forward, eps));
  worst = std::max(worst, sweep_buffer(probe_layer.bias, grads.grad_bias, probe,
                                       forward, eps));
  return worst;
}

double grad_check_deconv(const DeconvLayer& layer, const Tensor& input, Rng& rng,
                         double eps) {
  DeconvLayer probe_layer = layer;
  Tensor x = input;
  const Tensor probe = tensor_randn(deconv_forward(x, probe_layer).shape(), rng, 1.0);
  const LayerGrads grads = deconv_backward(x, probe_layer, probe);

  auto forward = [&] { return deconv_forward(x, probe_layer); };
  double worst = sweep_buffer(x.data(), grads.grad_input.data(), probe, forward, eps);
  worst = std::max(worst, sweep_buffer(probe_layer.weights.data(),
                                       grads.grad_weights.data(), probe, forward, eps));
  return worst;
}

double grad_check_maxpool(const MaxPoolLayer& layer, const Tensor& input, Rng& rng,
                          double eps) {
  Tensor x = input;
  auto [out, ctx] = maxpool_forward(x, layer);
  const Tensor probe = tensor_randn(out.shape(), rng, 1.0);
  const Tensor grad_input = maxpool_backward(ctx, probe);

  auto forward = [&] { return maxpool_forward(x, layer).first; };
  return sweep_buffer(x.data(), grad_input.data(), probe, forward, eps);
}

double grad_check_relu(const Tensor& input, Rng& rng, double eps) {
  Tensor x = input;
  const Tensor probe = tensor_randn(x.shape(), rng, 1.0);
  const Tensor grad_input = relu_backward(x, probe);

  auto forward = [&] { return relu_forward(x); };
  return sweep_buffer(x.data(), grad_input.data(), probe, forward, eps);
}

double grad_check_concat(const Tensor& a, const Tensor& b, Rng& rng, double eps) {
  Tensor xa = a;
  Tensor xb = b;
  const Tensor probe = tensor_randn(concat_channels(xa, xb).shape(), rng, 1.0);
  auto [ga, gb] = split_channels(probe, xa.shape().c);

  auto forward = [&] { return concat_channels(xa, xb); };
  double worst = sweep_buffer(xa.data(), ga.data(), probe, forward, eps);
  worst = std::max(worst, sweep_buffer(xb.data(), gb.data(), probe, forward, eps));
  return worst;
}

}  // namespace sacnn
