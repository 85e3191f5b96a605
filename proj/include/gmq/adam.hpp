#pragma once

#include <cstdint>
#include <vector>

#include "gmq/graph.hpp"

namespace gmq {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, one pair per parameter, plus the step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update of every parameter from its `grad`.
// State is lazily sized on the first call; later calls must pass the same
// parameter list (shapes are checked).
void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace gmq
