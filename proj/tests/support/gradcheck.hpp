#pragma once

// Central finite-difference oracle for the autodiff tape. Test-only: it
// perturbs leaves and re-runs Graph::forward(), never touching backward code.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gmq/graph.hpp"

namespace gmq::testing {

// Norm-wise relative error ||a-n|| / (||a|| + ||n||), 0 when both vanish.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  return denom < 1e-14 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

inline Tensor numeric_grad(Graph& g, NodeId leaf, NodeId root, double step = 1e-5) {
  Tensor base = g.value(leaf);
  Tensor out(base.shape());
  for (std::size_t i = 0; i < base.size(); ++i) {
    Tensor plus = base, minus = base;
    plus[i] += step;
    minus[i] -= step;
    g.set_value(leaf, plus);
    g.forward();
    const double fp = g.value(root).item();
    g.set_value(leaf, minus);
    g.forward();
    const double fm = g.value(root).item();
    out[i] = (fp - fm) / (2.0 * step);
  }
  g.set_value(leaf, base);
  g.forward();
  return out;
}

// Same oracle for a bound Parameter: perturbs p.value in place.
inline Tensor numeric_grad(Graph& g, Parameter& p, NodeId root, double step = 1e-5) {
  Tensor base = p.value;
  Tensor out(base.shape());
  for (std::size_t i = 0; i < base.size(); ++i) {
    p.value[i] = base[i] + step;
    g.forward();
    const double fp = g.value(root).item();
    p.value[i] = base[i] - step;
    g.forward();
    const double fm = g.value(root).item();
    p.value[i] = base[i];
    out[i] = (fp - fm) / (2.0 * step);
  }
  g.forward();
  return out;
}

// Runs backward once and returns the worst relative error across `leaves`.
inline double max_leaf_error(Graph& g, const std::vector<NodeId>& leaves, NodeId root) {
  g.backward(root);
  std::vector<Tensor> analytic;
  for (NodeId l : leaves) analytic.push_back(g.grad(l));
  double worst = 0.0;
  for (std::size_t k = 0; k < leaves.size(); ++k)
    worst = std::max(worst, relative_error(analytic[k], numeric_grad(g, leaves[k], root)));
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace gmq::testing
