#include <omp.h>

#include <vector>

#include "common.hpp"
#include "gmq/kernels.hpp"

namespace gmq::kernels::omp {

using detail::require;

// Every loop below parallelizes over independent output rows (or Gaussians);
// the per-element accumulation order matches serial.cpp exactly.

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(), "matmul", a, b);
  const std::size_t m = a.rows(), n = a.cols(), k = b.cols();
  Tensor c({m, k});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < n; ++p) {
      const double aip = pa[i * n + p];
      for (std::size_t j = 0; j < k; ++j) pc[i * k + j] += aip * pb[p * k + j];
    }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(), "matmul_tn", a, b);
  const std::size_t n = a.rows(), m = a.cols(), k = b.cols();
  Tensor c({m, k});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < n; ++p) {
      const double api = pa[p * m + i];
      for (std::size_t j = 0; j < k; ++j) pc[i * k + j] += api * pb[p * k + j];
    }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(), "matmul_nt", a, b);
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  Tensor c({m, k});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += pa[i * n + p] * pb[j * n + p];
      pc[i * k + j] = s;
    }
  return c;
}

GaussianForward gaussian_logpdf(const Tensor& z, const Tensor& means, const Tensor& chol) {
  const auto [m, d, kk] = detail::gaussian_dims(z, means, chol);
  GaussianForward out{Tensor({m, kk}), Tensor({m, kk, d})};
  const double* pz = z.data().data();
  const double* pmu = means.data().data();
  const double* pl = chol.data().data();
  double* logp = out.logp.data().data();
  double* solved = out.solved.data().data();
#pragma omp parallel for schedule(static) if (m * kk * d * d > 16384)
  for (std::size_t k = 0; k < kk; ++k) {
    const double* lower = pl + k * d * d;
    const double log_det = detail::log_det_half(lower, d);
    for (std::size_t i = 0; i < m; ++i)
      logp[i * kk + k] =
          detail::gaussian_point(pz + i * d, pmu + k * d, lower, d, log_det, solved + (i * kk + k) * d);
  }
  return out;
}

GaussianGrads gaussian_logpdf_backward(const Tensor& grad, const Tensor& z, const Tensor& means,
                                       const Tensor& chol, const Tensor& solved) {
  const auto [m, d, kk] = detail::gaussian_dims(z, means, chol);
  GaussianGrads g{Tensor({m, d}), Tensor({kk, d}), Tensor({kk, d, d})};
  std::vector<double> v(m * kk * d);
  const double* pg = grad.data().data();
  const double* pl = chol.data().data();
  const double* psolved = solved.data().data();
  double* pdmu = g.d_means.data().data();
  double* pdl = g.d_chol.data().data();
  double* pv = v.data();
  const bool big = m * kk * d * d > 16384;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t k = 0; k < kk; ++k) {
    const double* lower = pl + k * d * d;
    double* dmu = pdmu + k * d;
    double* dl = pdl + k * d * d;
    for (std::size_t i = 0; i < m; ++i) {
      const double gik = pg[i * kk + k];
      const double* u = psolved + (i * kk + k) * d;
      double* vik = pv + (i * kk + k) * d;
      detail::back_solve(lower, u, d, vik);
      for (std::size_t r = 0; r < d; ++r) {
        dmu[r] += gik * vik[r];
        for (std::size_t c = 0; c < r; ++c) dl[r * d + c] += gik * vik[r] * u[c];
        dl[r * d + r] += gik * (vik[r] * u[r] - 1.0 / lower[r * d + r]);
      }
    }
  }
  double* pdz = g.d_z.data().data();
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < kk; ++k) {
      const double gik = pg[i * kk + k];
      const double* vik = pv + (i * kk + k) * d;
      for (std::size_t r = 0; r < d; ++r) pdz[i * d + r] -= gik * vik[r];
    }
  return g;
}

}  // namespace gmq::kernels::omp
