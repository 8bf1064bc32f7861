#include "sacnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sacnn/format.hpp"

namespace sacnn {

std::pair<double, double> compute_metrics(
    const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw DataError("compute_metrics: empty pair list");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (const auto& [predicted, truth] : pairs) {
    const double d = predicted - truth;
    abs_sum += std::fabs(d);
    sq_sum += d * d;
  }
  const double n = double(pairs.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

EvalReport evaluate(ModelGraph& model, const Dataset& dataset) {
  if (dataset.images.empty()) throw DataError("evaluate: empty dataset");
  const int multiple = model.config().admission_multiple();

  EvalReport report;
  for (const AnnotatedImage& record : dataset.images) {
    const Shape s = record.image.shape();
    const Tensor cropped = crop_to_multiple(record.image, multiple);
    const Shape cs = cropped.shape();
    const int top = (s.h - cs.h) / 2;
    const int left = (s.w - cs.w) / 2;
    report.max_crop_margin_h = std::max(report.max_crop_margin_h, s.h - cs.h - top);
    report.max_crop_margin_w = std::max(report.max_crop_margin_w, s.w - cs.w - left);

    int surviving = 0;
    for (const HeadPoint& p : record.heads) {
      const double px = p.x - left;
      const double py = p.y - top;
      if (px >= 0.0 && px < cs.w && py >= 0.0 && py < cs.h) ++surviving;
    }

    const Prediction pred = model.forward(cropped);
    EvalRecord rec;
    rec.id = record.id;
    rec.predicted = pred.count;
    rec.ground_truth = double(surviving);
    rec.abs_error = std::fabs(rec.predicted - rec.ground_truth);
    report.records.push_back(std::move(rec));
  }

  std::vector<std::pair<double, double>> pairs;
  for (const EvalRecord& rec : report.records) {
    pairs.emplace_back(rec.predicted, rec.ground_truth);
  }
  const auto [mae, mse] = compute_metrics(pairs);
  report.mae = mae;
  report.mse = mse;
  report.n = int(report.records.size());
  return report;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    int dataset_size, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  if (k > dataset_size) {
    throw ConfigError("kfold_split: k=" + std::to_string(k) + " exceeds dataset size " +
                      std::to_string(dataset_size));
  }

  std::vector<int> indices(std::size_t(dataset_size));
  for (int i = 0; i < dataset_size; ++i) indices[std::size_t(i)] = i;
  Rng rng(seed);
  for (std::size_t i = indices.size(); i > 1; --i) {
    const auto j = std::size_t(rng.uniform_int(0, int(i) - 1));
    std::swap(indices[i - 1], indices[j]);
  }

  std::vector<std::pair<std::vector<int>, std::vector<int>>> folds;
  std::size_t start = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t len = std::size_t(dataset_size / k + (f < dataset_size % k ? 1 : 0));
    std::vector<int> test(indices.begin() + std::ptrdiff_t(start),
                          indices.begin() + std::ptrdiff_t(start + len));
    std::sort(test.begin(), test.end());
    std::vector<int> train;
    for (int i = 0; i < dataset_size; ++i) {
      if (!std::binary_search(test.begin(), test.end(), i)) train.push_back(i);
    }
    folds.emplace_back(std::move(train), std::move(test));
    start += len;
  }
  return folds;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "id,predicted,ground_truth,abs_error\n";
  for (const EvalRecord& rec : report.records) {
    out << rec.id << "," << format_double(rec.predicted) << ","
        << format_double(rec.ground_truth) << "," << format_double(rec.abs_error)
        << "\n";
  }
  out << "# summary n=" << report.n << " mae=" << format_double(report.mae)
      << " mse=" << format_double(report.mse) << " max_crop_margin="
      << report.max_crop_margin_w << "x" << report.max_crop_margin_h << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::json summary = {{"n", report.n}, {"mae", report.mae}, {"mse", report.mse}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << summary.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace sacnn
