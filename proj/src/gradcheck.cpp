#include "sacnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sacnn/layers.hpp"

namespace sacnn {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const GradCheckEntry& e : entries) w = std::max(w, e.worst);
  return w;
}

std::vector<std::string> GradCheckReport::offenders(double limit) const {
  std::vector<std::string> names;
  for (const GradCheckEntry& e : entries) {
    if (!(e.worst < limit)) names.push_back(e.name);
  }
  return names;
}

namespace {

constexpr double kEps = 1e-5;

double functional(const Tensor& density, const Tensor& probe, double count_weight) {
  double j = 0.0;
  for (std::int64_t i = 0; i < density.size(); ++i) j += density[i] * probe[i];
  return j + count_weight * tensor_sum(density);
}

// conv3 check with its own comparison loop so the corrupt hook can flip the
// analytic gradients before they are compared.
double check_conv3(Rng& rng, bool corrupt) {
  ConvLayer layer = make_conv(2, 3, 3, rng, 0.5);
  for (double& b : layer.bias) b = rng.normal(0.5);
  Tensor input = tensor_randn({1, 2, 5, 5}, rng, 1.0);
  const Tensor probe = tensor_randn({1, 3, 5, 5}, rng, 1.0);

  LayerGrads grads = conv_backward(input, layer, probe);
  if (corrupt) {
    for (auto& g : grads.grad_weights.data()) g += 0.25 + 0.25 * std::fabs(g);
  }

  double worst = 0.0;
  auto sweep = [&](std::vector<double>& buf, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double orig = buf[i];
      buf[i] = orig + kEps;
      const double jp = functional(conv_forward(input, layer), probe, 0.0);
      buf[i] = orig - kEps;
      const double jm = functional(conv_forward(input, layer), probe, 0.0);
      buf[i] = orig;
      worst = std::max(worst, relative_error(analytic[i], (jp - jm) / (2 * kEps)));
    }
  };
  sweep(input.data(), grads.grad_input.data());
  sweep(layer.weights.data(), grads.grad_weights.data());
  sweep(layer.bias, grads.grad_bias);
  return worst;
}

// Whole-graph check: J = <probe, density> + c * count, analytic gradients
// from backward, numeric from central differences over a deterministic
// sample of each parameter tensor.
double check_model(const ModelConfig& config, Rng& rng) {
  ModelGraph graph = build_model(config, rng);
  const int side = 16;
  const Tensor image = tensor_randn({1, 1, side, side}, rng, 1.0);

  Prediction pred = graph.forward(image);
  const Tensor probe = tensor_randn(pred.density.grid.shape(), rng, 1.0);
  const double count_weight = rng.normal(1.0);
  const GradStore analytic = graph.backward(probe, count_weight);

  constexpr std::size_t kSamplesPerParam = 24;
  double worst = 0.0;
  std::vector<ParamRef> params = graph.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::span<double> values = params[pi].values;
    std::vector<std::size_t> picks;
    if (values.size() <= kSamplesPerParam) {
      for (std::size_t i = 0; i < values.size(); ++i) picks.push_back(i);
    } else {
      for (std::size_t i = 0; i < kSamplesPerParam; ++i) {
        picks.push_back(std::size_t(rng.uniform_int(0, int(values.size()) - 1)));
      }
    }
    for (std::size_t idx : picks) {
      const double orig = values[idx];
      values[idx] = orig + kEps;
      const double jp =
          functional(graph.forward(image).density.grid, probe, count_weight);
      values[idx] = orig - kEps;
      const double jm =
          functional(graph.forward(image).density.grid, probe, count_weight);
      values[idx] = orig;
      const double numeric = (jp - jm) / (2 * kEps);
      worst = std::max(worst, relative_error(analytic.values[pi][idx], numeric));
    }
  }
  return worst;
}

}  // namespace

GradCheckReport run_gradcheck(Variant variant, const std::string& preset,
                              std::uint64_t seed, bool corrupt_backward) {
  Rng rng(seed);
  GradCheckReport report;

  report.entries.push_back({"conv3", check_conv3(rng, corrupt_backward)});
  {
    ConvLayer layer = make_conv(3, 2, 1, rng, 0.5);
    for (double& b : layer.bias) b = rng.normal(0.5);
    const Tensor input = tensor_randn({1, 3, 4, 4}, rng, 1.0);
    report.entries.push_back({"conv1", grad_check_conv(layer, input, rng, kEps)});
  }
  {
    const Tensor input = tensor_randn({1, 2, 5, 5}, rng, 1.0);
    report.entries.push_back(
        {"maxpool(s1)", grad_check_maxpool({1}, input, rng, kEps)});
  }
  {
    const Tensor input = tensor_randn({1, 2, 6, 6}, rng, 1.0);
    report.entries.push_back(
        {"maxpool(s2)", grad_check_maxpool({2}, input, rng, kEps)});
  }
  {
    DeconvLayer layer;
    layer.weights = tensor_randn({2, 2, 2, 2}, rng, 0.5);
    const Tensor input = tensor_randn({1, 2, 3, 3}, rng, 1.0);
    report.entries.push_back({"deconv", grad_check_deconv(layer, input, rng, kEps)});
  }
  {
    const Tensor input = tensor_randn({1, 2, 5, 5}, rng, 1.0);
    report.entries.push_back({"relu", grad_check_relu(input, rng, kEps)});
  }
  {
    const Tensor a = tensor_randn({1, 2, 4, 4}, rng, 1.0);
    const Tensor b = tensor_randn({1, 3, 4, 4}, rng, 1.0);
    report.entries.push_back({"concat", grad_check_concat(a, b, rng, kEps)});
  }
  {
    ModelConfig config = ModelConfig::preset(variant, preset);
    // Unit-scale activations keep finite differences resolvable; the 0.01
    // training init underflows a graph this deep.
    config.init = InitKind::kFanInScaled;
    report.entries.push_back({"model(" + to_string(variant) + ")",
                              check_model(config, rng)});
  }
  return report;
}

}  // namespace sacnn
