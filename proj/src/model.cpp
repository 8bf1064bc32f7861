#include "sacnn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sacnn {

Variant variant_from_string(std::string_view name) {
  if (name == "single-scale") return Variant::kSingleScale;
  if (name == "two-scale") return Variant::kTwoScale;
  if (name == "scale-adaptive") return Variant::kScaleAdaptive;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected single-scale, two-scale or scale-adaptive)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSingleScale: return "single-scale";
    case Variant::kTwoScale: return "two-scale";
    case Variant::kScaleAdaptive: return "scale-adaptive";
  }
  throw ConfigError("invalid variant value");
}

ModelConfig ModelConfig::preset(Variant variant, std::string_view name) {
  ModelConfig config;
  config.variant = variant;
  if (name == "full") {
    config.widths = {64, 128, 256, 512, 512, 512};
  } else if (name == "tiny") {
    config.widths = {4, 8, 16, 32, 32, 32};
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected full or tiny)");
  }
  return config;
}

int ModelConfig::admission_multiple() const {
  return variant == Variant::kScaleAdaptive ? 16 : 8;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

}  // namespace

std::uint64_t ModelConfig::digest() const {
  std::ostringstream canon;
  canon << to_string(variant);
  for (int w : widths) canon << "," << w;
  return fnv1a(canon.str());
}

double ModelGraph::conv_stddev(int c_in, int kernel) const {
  if (config_.init == InitKind::kFanInScaled) {
    return std::sqrt(2.0 / (double(c_in) * kernel * kernel));
  }
  return config_.init_stddev;
}

int ModelGraph::add_conv(std::string name, int c_in, int c_out, int kernel,
                         int input, Rng& rng) {
  convs_.push_back(make_conv(c_in, c_out, kernel, rng, conv_stddev(c_in, kernel)));
  nodes_.push_back({Node::Kind::kConv, std::move(name), input, -1,
                    int(convs_.size()) - 1});
  return int(nodes_.size()) - 1;
}

int ModelGraph::add_relu(int input) {
  nodes_.push_back({Node::Kind::kRelu, nodes_[std::size_t(input)].name + "_relu",
                    input, -1, -1});
  return int(nodes_.size()) - 1;
}

int ModelGraph::add_pool(std::string name, int stride, int input) {
  pools_.push_back({stride});
  nodes_.push_back({Node::Kind::kPool, std::move(name), input, -1,
                    int(pools_.size()) - 1});
  return int(nodes_.size()) - 1;
}

int ModelGraph::add_deconv(std::string name, int c_in, int c_out, int input) {
  // Learnable upsampler; starts as the constant kernel so an untrained graph
  // spreads values evenly (fan-in mode rescales to keep unit magnitude).
  const double init = config_.init == InitKind::kFanInScaled ? 1.0 / c_in : 0.25;
  deconvs_.push_back(make_deconv(c_in, c_out, init));
  nodes_.push_back({Node::Kind::kDeconv, std::move(name), input, -1,
                    int(deconvs_.size()) - 1});
  return int(nodes_.size()) - 1;
}

int ModelGraph::add_concat(std::string name, int input_a, int input_b) {
  nodes_.push_back({Node::Kind::kConcat, std::move(name), input_a, input_b, -1});
  return int(nodes_.size()) - 1;
}

ModelGraph::ModelGraph(const ModelConfig& config, Rng& rng) : config_(config) {
  for (int w : config.widths) {
    if (w < 1) throw ConfigError("model widths must be >= 1");
  }
  const int w1 = config.widths[0], w2 = config.widths[1], w3 = config.widths[2];
  const int w4 = config.widths[3], w5 = config.widths[4], w6 = config.widths[5];

  int cur = -1;
  cur = add_relu(add_conv("conv1_1", 1, w1, 3, cur, rng));
  cur = add_relu(add_conv("conv1_2", w1, w1, 3, cur, rng));
  cur = add_pool("pool1", 2, cur);
  cur = add_relu(add_conv("conv2_1", w1, w2, 3, cur, rng));
  cur = add_relu(add_conv("conv2_2", w2, w2, 3, cur, rng));
  cur = add_pool("pool2", 2, cur);
  cur = add_relu(add_conv("conv3_1", w2, w3, 3, cur, rng));
  cur = add_relu(add_conv("conv3_2", w3, w3, 3, cur, rng));
  cur = add_relu(add_conv("conv3_3", w3, w3, 3, cur, rng));
  cur = add_pool("pool3", 2, cur);
  cur = add_relu(add_conv("conv4_1", w3, w4, 3, cur, rng));
  const int conv4_2 = add_relu(add_conv("conv4_2", w4, w4, 3, cur, rng));

  int pconv_in = -1;
  int pconv_channels = 0;
  switch (config.variant) {
    case Variant::kSingleScale: {
      // Branches straight off conv4_2; the deeper blocks do not exist here.
      pconv_in = conv4_2;
      pconv_channels = w4;
      break;
    }
    case Variant::kTwoScale: {
      const int conv4_3 = add_relu(add_conv("conv4_3", w4, w4, 3, conv4_2, rng));
      int deep = add_pool("pool4", 1, conv4_3);  // stride 1 keeps 1/8 size
      deep = add_relu(add_conv("conv5_1", w4, w5, 3, deep, rng));
      deep = add_relu(add_conv("conv5_2", w5, w5, 3, deep, rng));
      const int conv5_3 = add_relu(add_conv("conv5_3", w5, w5, 3, deep, rng));
      pconv_in = add_concat("concat4_5", conv4_3, conv5_3);
      pconv_channels = w4 + w5;
      break;
    }
    case Variant::kScaleAdaptive: {
      const int conv4_3 = add_relu(add_conv("conv4_3", w4, w4, 3, conv4_2, rng));
      int deep = add_pool("pool4", 2, conv4_3);  // to 1/16
      deep = add_relu(add_conv("conv5_1", w4, w5, 3, deep, rng));
      deep = add_relu(add_conv("conv5_2", w5, w5, 3, deep, rng));
      const int conv5_3 = add_relu(add_conv("conv5_3", w5, w5, 3, deep, rng));
      const int pool5 = add_pool("pool5", 1, conv5_3);
      const int conv6_1 = add_relu(add_conv("conv6_1", w5, w6, 3, pool5, rng));
      const int cat56 = add_concat("concat5_6", conv5_3, conv6_1);
      const int up = add_deconv("deconv", w5 + w6, w5, cat56);  // back to 1/8
      pconv_in = add_concat("concat4_up", up, conv4_3);
      pconv_channels = w5 + w4;
      break;
    }
  }
  // 1x1 projection to the density map, then ReLU for non-negativity.
  add_relu(add_conv("pconv", pconv_channels, 1, 1, pconv_in, rng));
}

Prediction ModelGraph::forward(const Tensor& image) {
  const Shape s = image.shape();
  if (s.c != 1) {
    throw ShapeError("model input must be single-channel, got " + to_string(s));
  }
  const int m = config_.admission_multiple();
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeError("input dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by " + std::to_string(m) +
                     "; use crop_to_multiple(image, " + std::to_string(m) + ")");
  }

  input_ = image;
  outputs_.assign(nodes_.size(), Tensor());
  pool_ctx_.assign(pools_.size(), MaxPoolContext());

  auto src = [&](int i) -> const Tensor& {
    return i < 0 ? input_ : outputs_[std::size_t(i)];
  };

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    switch (node.kind) {
      case Node::Kind::kConv:
        outputs_[i] = conv_forward(src(node.in_a), convs_[std::size_t(node.layer)]);
        break;
      case Node::Kind::kRelu:
        outputs_[i] = relu_forward(src(node.in_a));
        break;
      case Node::Kind::kPool: {
        auto [out, ctx] = maxpool_forward(src(node.in_a), pools_[std::size_t(node.layer)]);
        outputs_[i] = std::move(out);
        pool_ctx_[std::size_t(node.layer)] = std::move(ctx);
        break;
      }
      case Node::Kind::kDeconv:
        outputs_[i] = deconv_forward(src(node.in_a), deconvs_[std::size_t(node.layer)]);
        break;
      case Node::Kind::kConcat:
        outputs_[i] = concat_channels(src(node.in_a), src(node.in_b));
        break;
    }
  }
  has_forward_ = true;

  Prediction pred;
  pred.density.grid = outputs_.back();
  pred.count = tensor_sum(pred.density.grid);
  pred.density.head_count = pred.count;
  return pred;
}

GradStore ModelGraph::backward(const Tensor& grad_density, double grad_count) {
  if (!has_forward_) {
    throw StateError("backward called before forward");
  }
  const Shape out_shape = outputs_.back().shape();
  if (!(grad_density.shape() == out_shape)) {
    throw ShapeError("grad_density shape " + to_string(grad_density.shape()) +
                     " does not match output " + to_string(out_shape));
  }

  GradStore grads;
  for (const ParamRef& p : params()) {
    grads.values.emplace_back(p.values.size(), 0.0);
  }
  // params() order: per node in graph order, weight then bias.
  std::map<std::string, std::size_t> slot;
  {
    std::size_t idx = 0;
    for (const ParamRef& p : params()) slot[p.name] = idx++;
  }

  std::vector<Tensor> node_grads(nodes_.size());
  auto accumulate = [&](int target, const Tensor& g) {
    if (target < 0) return;  // gradient w.r.t. the image is not needed
    Tensor& buf = node_grads[std::size_t(target)];
    if (buf.size() == 0) buf = Tensor(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  };
  auto src = [&](int i) -> const Tensor& {
    return i < 0 ? input_ : outputs_[std::size_t(i)];
  };

  // count = sum over density cells, so grad_count adds uniformly.
  {
    Tensor seed(out_shape);
    for (std::int64_t i = 0; i < seed.size(); ++i) {
      seed[i] = grad_density[i] + grad_count;
    }
    node_grads.back() = std::move(seed);
  }

  for (std::size_t ri = nodes_.size(); ri-- > 0;) {
    const Node& node = nodes_[ri];
    const Tensor& g = node_grads[ri];
    if (g.size() == 0) continue;  // node does not influence the output
    switch (node.kind) {
      case Node::Kind::kConv: {
        const ConvLayer& layer = convs_[std::size_t(node.layer)];
        LayerGrads lg = conv_backward(src(node.in_a), layer, g);
        grads.values[slot.at(node.name + ".weight")] = std::move(lg.grad_weights.data());
        grads.values[slot.at(node.name + ".bias")] = std::move(lg.grad_bias);
        accumulate(node.in_a, lg.grad_input);
        break;
      }
      case Node::Kind::kRelu:
        accumulate(node.in_a, relu_backward(src(node.in_a), g));
        break;
      case Node::Kind::kPool:
        accumulate(node.in_a, maxpool_backward(pool_ctx_[std::size_t(node.layer)], g));
        break;
      case Node::Kind::kDeconv: {
        const DeconvLayer& layer = deconvs_[std::size_t(node.layer)];
        LayerGrads lg = deconv_backward(src(node.in_a), layer, g);
        grads.values[slot.at(node.name + ".weight")] = std::move(lg.grad_weights.data());
        accumulate(node.in_a, lg.grad_input);
        break;
      }
      case Node::Kind::kConcat: {
        const int c_a = src(node.in_a).shape().c;
        auto [ga, gb] = split_channels(g, c_a);
        accumulate(node.in_a, ga);
        accumulate(node.in_b, gb);
        break;
      }
    }
  }
  return grads;
}

int ModelGraph::node_count(Node::Kind kind) const {
  return int(std::count_if(nodes_.begin(), nodes_.end(),
                           [&](const Node& n) { return n.kind == kind; }));
}

Shape ModelGraph::activation_shape(std::string_view node_name) const {
  if (!has_forward_) throw StateError("activation_shape requires a cached forward");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == node_name) return outputs_[i].shape();
  }
  throw ConfigError("unknown node '" + std::string(node_name) + "'");
}

std::vector<ParamRef> ModelGraph::params() {
  std::vector<ParamRef> refs;
  for (const Node& node : nodes_) {
    if (node.kind == Node::Kind::kConv) {
      ConvLayer& layer = convs_[std::size_t(node.layer)];
      refs.push_back({node.name + ".weight", layer.weights.shape(),
                      std::span<double>(layer.weights.data())});
      refs.push_back({node.name + ".bias", {1, layer.out_channels(), 1, 1},
                      std::span<double>(layer.bias)});
    } else if (node.kind == Node::Kind::kDeconv) {
      DeconvLayer& layer = deconvs_[std::size_t(node.layer)];
      refs.push_back({node.name + ".weight", layer.weights.shape(),
                      std::span<double>(layer.weights.data())});
    }
  }
  return refs;
}

std::vector<ParamCRef> ModelGraph::params() const {
  std::vector<ParamCRef> refs;
  for (const Node& node : nodes_) {
    if (node.kind == Node::Kind::kConv) {
      const ConvLayer& layer = convs_[std::size_t(node.layer)];
      refs.push_back({node.name + ".weight", layer.weights.shape(),
                      std::span<const double>(layer.weights.data())});
      refs.push_back({node.name + ".bias", {1, layer.out_channels(), 1, 1},
                      std::span<const double>(layer.bias)});
    } else if (node.kind == Node::Kind::kDeconv) {
      const DeconvLayer& layer = deconvs_[std::size_t(node.layer)];
      refs.push_back({node.name + ".weight", layer.weights.shape(),
                      std::span<const double>(layer.weights.data())});
    }
  }
  return refs;
}

std::int64_t ModelGraph::parameter_count() const {
  std::int64_t total = 0;
  for (const ParamCRef& p : params()) total += std::int64_t(p.values.size());
  return total;
}

namespace {

constexpr char kMagic[4] = {'S', 'A', 'C', 'N'};
constexpr std::uint16_t kVersion = 1;

void write_bytes(std::ostream& out, std::uint64_t v, int n_bytes) {
  for (int i = 0; i < n_bytes; ++i) out.put(char((v >> (8 * i)) & 0xff));
}

std::uint64_t read_bytes(std::istream& in, int n_bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < n_bytes; ++i) {
    const int ch = in.get();
    if (ch == EOF) throw DataError("checkpoint truncated");
    v |= std::uint64_t(std::uint8_t(ch)) << (8 * i);
  }
  return v;
}

}  // namespace

void ModelGraph::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  write_bytes(out, kVersion, 2);
  write_bytes(out, config_.digest(), 8);
  for (const ParamCRef& p : params()) {
    write_bytes(out, p.name.size(), 4);
    out.write(p.name.data(), std::streamsize(p.name.size()));
    write_bytes(out, std::uint64_t(p.shape.n), 4);
    write_bytes(out, std::uint64_t(p.shape.c), 4);
    write_bytes(out, std::uint64_t(p.shape.h), 4);
    write_bytes(out, std::uint64_t(p.shape.w), 4);
    for (double v : p.values) {
      write_bytes(out, std::bit_cast<std::uint32_t>(float(v)), 4);
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

ModelGraph ModelGraph::load_checkpoint(const std::filesystem::path& path,
                                       const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + " is not a SACN checkpoint");
  }
  const auto version = std::uint16_t(read_bytes(in, 2));
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t digest = read_bytes(in, 8);
  if (digest != config.digest()) {
    throw ConfigError("checkpoint config digest " + hex64(digest) +
                      " does not match requested model digest " +
                      hex64(config.digest()));
  }

  Rng rng(0);  // initial values are fully overwritten below
  ModelGraph graph(config, rng);
  std::map<std::string, ParamRef> by_name;
  for (ParamRef p : graph.params()) by_name.emplace(p.name, p);
  std::set<std::string> seen;

  while (true) {
    const int first = in.peek();
    if (first == EOF) break;
    const auto name_len = std::size_t(read_bytes(in, 4));
    std::string name(name_len, '\0');
    in.read(name.data(), std::streamsize(name_len));
    if (!in) throw DataError("checkpoint truncated in record name");
    Shape shape;
    shape.n = int(read_bytes(in, 4));
    shape.c = int(read_bytes(in, 4));
    shape.h = int(read_bytes(in, 4));
    shape.w = int(read_bytes(in, 4));

    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw DataError("checkpoint has unknown parameter '" + name + "'");
    }
    if (!seen.insert(name).second) {
      throw DataError("checkpoint has duplicate parameter '" + name + "'");
    }
    if (!(shape == it->second.shape)) {
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      to_string(shape) + ", expected " + to_string(it->second.shape));
    }
    for (double& v : it->second.values) {
      v = double(std::bit_cast<float>(std::uint32_t(read_bytes(in, 4))));
    }
  }
  if (seen.size() != by_name.size()) {
    throw DataError("checkpoint is missing " +
                    std::to_string(by_name.size() - seen.size()) + " parameter(s)");
  }
  return graph;
}

ModelGraph build_model(const ModelConfig& config, Rng& rng) {
  return ModelGraph(config, rng);
}

Tensor crop_to_multiple(const Tensor& image, int m) {
  if (m < 1) throw ConfigError("crop_to_multiple: m must be >= 1");
  const Shape s = image.shape();
  if (s.h < m || s.w < m) {
    throw DataError("image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                    " smaller than required multiple " + std::to_string(m));
  }
  const int nh = (s.h / m) * m;
  const int nw = (s.w / m) * m;
  if (nh == s.h && nw == s.w) return image;
  const int top = (s.h - nh) / 2;
  const int left = (s.w - nw) / 2;
  Tensor out({s.n, s.c, nh, nw});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < nh; ++y) {
        for (int x = 0; x < nw; ++x) {
          out.at(n, c, y, x) = image.at(n, c, y + top, x + left);
        }
      }
    }
  }
  return out;
}

}  // namespace sacnn
