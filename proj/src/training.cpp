#include "sacnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sacnn/format.hpp"

namespace sacnn {

CountLossKind count_loss_from_string(std::string_view name) {
  if (name == "none") return CountLossKind::kNone;
  if (name == "relative") return CountLossKind::kRelative;
  if (name == "absolute") return CountLossKind::kAbsolute;
  throw ConfigError("unknown count loss '" + std::string(name) +
                    "' (expected none, relative or absolute)");
}

std::string to_string(CountLossKind kind) {
  switch (kind) {
    case CountLossKind::kNone: return "none";
    case CountLossKind::kRelative: return "relative";
    case CountLossKind::kAbsolute: return "absolute";
  }
  throw ConfigError("invalid count loss value");
}

std::pair<double, Tensor> density_loss(const Tensor& pred, const Tensor& gt) {
  if (!(pred.shape() == gt.shape())) {
    throw ShapeError("density_loss shape mismatch: " + to_string(pred.shape()) +
                     " vs " + to_string(gt.shape()));
  }
  double loss = 0.0;
  Tensor grad(pred.shape());
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    loss += d * d;
    grad[i] = 2.0 * d;
  }
  return {loss, std::move(grad)};
}

std::pair<double, double> relative_count_loss(double pred_count, double gt_count) {
  if (gt_count < 0.0) {
    throw DataError("relative_count_loss: negative ground-truth count");
  }
  const double denom = gt_count + 1.0;
  const double r = (pred_count - gt_count) / denom;
  return {r * r, 2.0 * (pred_count - gt_count) / (denom * denom)};
}

std::pair<double, double> absolute_count_loss(double pred_count, double gt_count) {
  const double d = pred_count - gt_count;
  return {d * d, 2.0 * d};
}

JointLoss joint_loss(const Prediction& pred, const DensityMap& gt,
                     const TrainConfig& config, int phase) {
  JointLoss result;
  auto [ld, gd] = density_loss(pred.density.grid, gt.grid);
  result.density_part = ld;
  result.grad_density = std::move(gd);
  for (double& v : result.grad_density.data()) v *= config.density_weight;
  result.total = config.density_weight * ld;

  const bool use_count = phase >= 2 && config.count_loss != CountLossKind::kNone &&
                         config.count_weight > 0.0;
  if (use_count) {
    const double gt_count = tensor_sum(gt.grid);
    auto [ly, dly] = config.count_loss == CountLossKind::kRelative
                         ? relative_count_loss(pred.count, gt_count)
                         : absolute_count_loss(pred.count, gt_count);
    result.count_part = ly;
    result.grad_count = config.count_weight * dly;
    result.total += config.count_weight * ly;
  }
  return result;
}

void sgd_step(std::vector<ParamRef>& params, const GradStore& grads,
              TrainState& state, double lr, double momentum) {
  if (grads.values.size() != params.size()) {
    throw ShapeError("sgd_step: gradient store does not match parameter list");
  }
  if (state.velocity.empty()) {
    for (const ParamRef& p : params) {
      state.velocity.emplace_back(p.values.size(), 0.0);
    }
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: velocity buffers do not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> p = params[i].values;
    const std::vector<double>& g = grads.values[i];
    std::vector<double>& v = state.velocity[i];
    if (g.size() != p.size() || v.size() != p.size()) {
      throw ShapeError("sgd_step: buffer size mismatch for " + params[i].name);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] - lr * g[j];
      p[j] += v[j];
    }
  }
}

double lr_at(int epoch, const TrainConfig& config) {
  double lr = config.lr_start;
  for (int milestone : config.lr_milestones) {
    if (epoch >= milestone) lr *= 0.1;
  }
  return std::max(lr, config.lr_end);
}

std::vector<AnnotatedImage> crop_patches(const AnnotatedImage& record, Rng& rng) {
  const Shape s = record.image.shape();
  if (s.h < 32 || s.w < 32) {
    throw DataError("crop_patches: image " + record.id + " is " +
                    std::to_string(s.w) + "x" + std::to_string(s.h) +
                    ", need at least 32x32");
  }
  const int raw_h = s.h / 2;
  const int raw_w = s.w / 2;
  const int patch_h = (raw_h / 16) * 16;
  const int patch_w = (raw_w / 16) * 16;

  std::vector<AnnotatedImage> patches;
  for (int k = 0; k < 9; ++k) {
    const int oy = rng.uniform_int(0, s.h - raw_h);
    const int ox = rng.uniform_int(0, s.w - raw_w);

    AnnotatedImage patch;
    patch.id = record.id + "#patch" + std::to_string(k);
    patch.image = Tensor({1, 1, patch_h, patch_w});
    for (int y = 0; y < patch_h; ++y) {
      for (int x = 0; x < patch_w; ++x) {
        patch.image.at(0, 0, y, x) = record.image.at(0, 0, y + oy, x + ox);
      }
    }
    for (const HeadPoint& p : record.heads) {
      const double px = p.x - ox;
      const double py = p.y - oy;
      if (px >= 0.0 && px < patch_w && py >= 0.0 && py < patch_h) {
        patch.heads.push_back({px, py});
      }
    }
    patches.push_back(std::move(patch));
  }
  return patches;
}

namespace {

void validate_config(const TrainConfig& config) {
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (config.density_weight < 0.0 || config.count_weight < 0.0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (config.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (config.batch != 1) throw ConfigError("only batch size 1 is supported");
  if (!(config.sigma > 0.0)) throw ConfigError("sigma must be > 0");
  if (!std::is_sorted(config.lr_milestones.begin(), config.lr_milestones.end())) {
    throw ConfigError("lr milestones must be sorted ascending");
  }
}

struct Sample {
  Tensor image;
  DensityMap gt;  // at 1/8 resolution
};

Sample make_sample(const AnnotatedImage& record, double sigma) {
  const Shape s = record.image.shape();
  Sample sample;
  sample.image = record.image;
  sample.gt = downsample_sum(render_density(record.heads, s.h, s.w, sigma), 8);
  return sample;
}

// Center-crop a record to model-admissible dims, translating and dropping
// head points like the evaluation path does.
AnnotatedImage admit_record(const AnnotatedImage& record, int multiple) {
  const Shape s = record.image.shape();
  AnnotatedImage out;
  out.id = record.id;
  out.image = crop_to_multiple(record.image, multiple);
  const Shape cs = out.image.shape();
  const int top = (s.h - cs.h) / 2;
  const int left = (s.w - cs.w) / 2;
  for (const HeadPoint& p : record.heads) {
    const double px = p.x - left;
    const double py = p.y - top;
    if (px >= 0.0 && px < cs.w && py >= 0.0 && py < cs.h) {
      out.heads.push_back({px, py});
    }
  }
  return out;
}

}  // namespace

TrainResult train(const Dataset& dataset, const ModelConfig& model_config,
                  const TrainConfig& config) {
  if (dataset.images.empty()) throw DataError("train: empty dataset");
  validate_config(config);

  Rng rng(config.seed);
  ModelGraph model = build_model(model_config, rng);
  std::vector<ParamRef> params = model.params();

  std::vector<Sample> samples;
  for (const AnnotatedImage& record : dataset.images) {
    if (config.augment) {
      for (const AnnotatedImage& patch : crop_patches(record, rng)) {
        samples.push_back(make_sample(patch, config.sigma));
      }
    } else {
      samples.push_back(make_sample(
          admit_record(record, model_config.admission_multiple()), config.sigma));
    }
  }

  TrainState state;
  state.phase = 1;
  int phase2_start = -1;

  double best_window = std::numeric_limits<double>::infinity();
  std::vector<double> epoch_means;
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  long iteration = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    const double lr = lr_at(epoch, config);

    // Fisher-Yates with our own rng; std::shuffle is not portable.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::size_t(rng.uniform_int(0, int(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double density_sum = 0.0;
    for (std::size_t idx : order) {
      const Sample& sample = samples[std::size_t(idx)];
      const Prediction pred = model.forward(sample.image);
      const JointLoss loss = joint_loss(pred, sample.gt, config, state.phase);
      if (!std::isfinite(loss.total)) {
        throw NumericError("non-finite loss at iteration " +
                           std::to_string(iteration) + " (epoch " +
                           std::to_string(epoch) + ")");
      }
      const GradStore grads = model.backward(loss.grad_density, loss.grad_count);
      sgd_step(params, grads, state, lr, config.momentum);

      state.history.push_back({epoch, iteration, state.phase, loss.density_part,
                               loss.count_part, loss.total, lr});
      density_sum += loss.density_part;
      ++iteration;
    }

    if (state.phase == 1) {
      epoch_means.push_back(density_sum / double(samples.size()));
      bool switch_phase = false;
      if (config.phase1_epoch_cap > 0 && epoch + 1 >= config.phase1_epoch_cap) {
        switch_phase = true;
      } else if (config.phase1_threshold > 0.0 &&
                 int(epoch_means.size()) >= config.phase1_window) {
        double window_mean = 0.0;
        for (int i = 0; i < config.phase1_window; ++i) {
          window_mean += epoch_means[epoch_means.size() - 1 - std::size_t(i)];
        }
        window_mean /= double(config.phase1_window);
        if (std::isfinite(best_window)) {
          const double improvement = (best_window - window_mean) / best_window;
          if (improvement < config.phase1_threshold) switch_phase = true;
        }
        best_window = std::min(best_window, window_mean);
      }
      if (switch_phase && config.count_loss != CountLossKind::kNone) {
        state.phase = 2;
        phase2_start = epoch + 1;
      }
    }

    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      std::ostringstream name;
      name << "epoch_" << (epoch + 1) << ".ckpt";
      model.save_checkpoint(config.checkpoint_dir / name.str());
    }
  }

  return {std::move(model), std::move(state.history), phase2_start};
}

void write_loss_csv(const std::vector<LossRow>& history,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "epoch,iteration,phase,density_loss,count_loss,joint_loss,lr\n";
  for (const LossRow& row : history) {
    out << row.epoch << "," << row.iteration << "," << row.phase << ","
        << format_double(row.density_loss) << "," << format_double(row.count_loss)
        << "," << format_double(row.joint) << "," << format_double(row.lr) << "\n";
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace sacnn
