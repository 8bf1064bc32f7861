#ifndef SACNN_EVAL_HPP_
#define SACNN_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sacnn/data_io.hpp"
#include "sacnn/model.hpp"

namespace sacnn {

struct EvalRecord {
  std::string id;
  double predicted = 0.0;     // F_Y
  double ground_truth = 0.0;  // Y
  double abs_error = 0.0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  double mae = 0.0;
  double mse = 0.0;  // root of mean squared error
  int n = 0;
  // Largest pixels trimmed per side by the admission crop.
  int max_crop_margin_h = 0;
  int max_crop_margin_w = 0;
};

/// MAE = mean |F - Y|; MSE = sqrt(mean (F - Y)^2).
std::pair<double, double> compute_metrics(
    const std::vector<std::pair<double, double>>& pairs);

/// Whole-image evaluation: each image is center-cropped to admissible dims,
/// heads dropped by the crop are excluded from Y, and the model's predicted
/// count is compared against the surviving annotation count.
EvalReport evaluate(ModelGraph& model, const Dataset& dataset);

/// Deterministic shuffled k-fold partition: (train, test) index lists per
/// fold; test folds are disjoint and cover every index.
std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    int dataset_size, int k, std::uint64_t seed);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);

}  // namespace sacnn

#endif  // SACNN_EVAL_HPP_
