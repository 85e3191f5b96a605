#include "gmq/adam.hpp"

#include <cmath>

#include "gmq/error.hpp"

namespace gmq {

void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size())
    throw ContractViolation("adam_step: state holds " + std::to_string(state.m.size()) + " slots for " +
                            std::to_string(params.size()) + " parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape())
      throw ContractViolation("adam_step: shape mismatch for parameter '" + p.name + "' " +
                              shape_string(p.value.shape()) + " vs state " + shape_string(m.shape()));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p.value[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace gmq
