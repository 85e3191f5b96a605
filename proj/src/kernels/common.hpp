#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "gmq/error.hpp"
#include "gmq/tensor.hpp"

// Shape checks and per-element bodies shared by the serial and OpenMP kernels.
namespace gmq::kernels::detail {

inline void require(bool ok, const char* kernel, const Tensor& a, const Tensor& b) {
  if (!ok)
    throw ContractViolation(std::string(kernel) + ": incompatible shapes " + shape_string(a.shape()) +
                            " and " + shape_string(b.shape()));
}

struct GaussDims {
  std::size_t m, d, k;
};

inline GaussDims gaussian_dims(const Tensor& z, const Tensor& means, const Tensor& chol) {
  require(z.rank() == 2 && means.rank() == 2 && z.cols() == means.cols(), "gaussian_logpdf", z, means);
  require(chol.rank() == 3 && chol.dim(0) == means.rows() && chol.dim(1) == means.cols() &&
              chol.dim(2) == means.cols(),
          "gaussian_logpdf", means, chol);
  return {z.rows(), z.cols(), means.rows()};
}

inline double log_det_half(const double* lower, std::size_t d) {
  double s = 0.0;
  for (std::size_t r = 0; r < d; ++r) s += std::log(lower[r * d + r]);
  return s;
}

// Solves L u = z - mu by forward substitution, returns log N(z | mu, L L^T).
inline double gaussian_point(const double* z, const double* mu, const double* lower, std::size_t d,
                             double log_det, double* u) {
  double q = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    double acc = z[r] - mu[r];
    for (std::size_t c = 0; c < r; ++c) acc -= lower[r * d + c] * u[c];
    u[r] = acc / lower[r * d + r];
    q += u[r] * u[r];
  }
  return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - log_det - 0.5 * q;
}

// v = L^{-T} u by back substitution.
inline void back_solve(const double* lower, const double* u, std::size_t d, double* v) {
  for (std::size_t rr = d; rr-- > 0;) {
    double acc = u[rr];
    for (std::size_t c = rr + 1; c < d; ++c) acc -= lower[c * d + rr] * v[c];
    v[rr] = acc / lower[rr * d + rr];
  }
}

}  // namespace gmq::kernels::detail
