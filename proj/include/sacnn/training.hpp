#ifndef SACNN_TRAINING_HPP_
#define SACNN_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "sacnn/data_io.hpp"
#include "sacnn/model.hpp"

namespace sacnn {

enum class CountLossKind { kNone, kRelative, kAbsolute };

CountLossKind count_loss_from_string(std::string_view name);
std::string to_string(CountLossKind kind);

struct TrainConfig {
  double lr_start = 1e-6;
  double lr_end = 1e-8;
  std::vector<int> lr_milestones = {100, 200};
  double momentum = 0.9;
  int batch = 1;  // the only supported batch size
  int epochs = 250;
  double density_weight = 1.0;
  double count_weight = 0.1;
  CountLossKind count_loss = CountLossKind::kRelative;
  // Phase 1 ends when the windowed mean of the per-epoch density loss stops
  // improving by phase1_threshold (relative), or at phase1_epoch_cap.
  // threshold <= 0 disables the convergence test; cap 0 means no cap.
  int phase1_window = 5;
  double phase1_threshold = 0.01;
  int phase1_epoch_cap = 0;
  std::uint64_t seed = 0;
  bool augment = true;     // 9 quarter-size patches per training image
  double sigma = 4.0;      // ground-truth Gaussian width, pixels
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
};

struct LossRow {
  int epoch = 0;
  long iteration = 0;
  int phase = 1;
  double density_loss = 0.0;
  double count_loss = 0.0;
  double joint = 0.0;
  double lr = 0.0;
};

/// Optimizer state: momentum buffers aligned with ModelGraph::params().
struct TrainState {
  std::vector<std::vector<double>> velocity;
  int epoch = 0;
  int phase = 1;
  std::vector<LossRow> history;
};

/// Squared L2 distance between density maps, summed over pixels (single
/// image, so the batch mean factor is 1). Returns (loss, d loss / d pred).
std::pair<double, Tensor> density_loss(const Tensor& pred, const Tensor& gt);

/// ((F - Y) / (Y + 1))^2 and its derivative w.r.t. F. The +1 keeps the
/// denominator away from zero on empty scenes.
std::pair<double, double> relative_count_loss(double pred_count, double gt_count);

/// (F - Y)^2 and derivative; ablation alternative to the relative loss.
std::pair<double, double> absolute_count_loss(double pred_count, double gt_count);

struct JointLoss {
  double total = 0.0;
  double density_part = 0.0;  // unweighted L_D
  double count_part = 0.0;    // unweighted L_Y
  Tensor grad_density;        // d total / d pred grid
  double grad_count = 0.0;    // d total / d pred count
};

/// density_weight * L_D plus, in phase 2, count_weight * L_Y with the GT
/// count taken as the integral of the GT map.
JointLoss joint_loss(const Prediction& pred, const DensityMap& gt,
                     const TrainConfig& config, int phase);

/// Classical momentum: v <- momentum * v - lr * g; p <- p + v.
void sgd_step(std::vector<ParamRef>& params, const GradStore& grads,
              TrainState& state, double lr, double momentum);

/// Multistep schedule: lr_start * 0.1 per passed milestone, never below lr_end.
double lr_at(int epoch, const TrainConfig& config);

/// Nine random quarter-size patches (each cropped down to multiple-of-16
/// dims). Head points are translated into patch coordinates; heads whose
/// center falls outside a patch are dropped.
std::vector<AnnotatedImage> crop_patches(const AnnotatedImage& record, Rng& rng);

struct TrainResult {
  ModelGraph model;
  std::vector<LossRow> history;
  int phase2_start_epoch = -1;  // -1 if training never left phase 1
};

/// Two-phase training driver: density-only until convergence (or cap), then
/// joint. Deterministic for a fixed seed and config.
TrainResult train(const Dataset& dataset, const ModelConfig& model_config,
                  const TrainConfig& config);

void write_loss_csv(const std::vector<LossRow>& history,
                    const std::filesystem::path& path);

}  // namespace sacnn

#endif  // SACNN_TRAINING_HPP_
