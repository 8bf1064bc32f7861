#ifndef SACNN_GRADCHECK_HPP_
#define SACNN_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sacnn/model.hpp"

namespace sacnn {

struct GradCheckEntry {
  std::string name;    // layer kind or "model"
  double worst = 0.0;  // worst relative error vs central differences
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double worst() const;
  std::vector<std::string> offenders(double limit) const;
  bool pass(double limit) const { return worst() < limit; }
};

/// Layer-wise checks over every layer kind the network uses (conv3, conv1,
/// maxpool stride 1 and 2, deconv, relu, concat) plus a sampled whole-graph
/// check of the requested variant. `corrupt_backward` is a test hook that
/// injects a wrong analytic gradient into the conv3 check so the negative
/// path can be exercised end to end.
GradCheckReport run_gradcheck(Variant variant, const std::string& preset,
                              std::uint64_t seed, bool corrupt_backward = false);

}  // namespace sacnn

#endif  // SACNN_GRADCHECK_HPP_
