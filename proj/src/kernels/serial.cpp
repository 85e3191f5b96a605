#include <vector>

#include "common.hpp"
#include "gmq/kernels.hpp"

namespace gmq::kernels::serial {

using detail::require;

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(), "matmul", a, b);
  const std::size_t m = a.rows(), n = a.cols(), k = b.cols();
  Tensor c({m, k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < n; ++p) {
      const double aip = a(i, p);
      for (std::size_t j = 0; j < k; ++j) c(i, j) += aip * b(p, j);
    }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(), "matmul_tn", a, b);
  const std::size_t n = a.rows(), m = a.cols(), k = b.cols();
  Tensor c({m, k});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double api = a(p, i);
      for (std::size_t j = 0; j < k; ++j) c(i, j) += api * b(p, j);
    }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(), "matmul_nt", a, b);
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  Tensor c({m, k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  return c;
}

GaussianForward gaussian_logpdf(const Tensor& z, const Tensor& means, const Tensor& chol) {
  const auto [m, d, kk] = detail::gaussian_dims(z, means, chol);
  GaussianForward out{Tensor({m, kk}), Tensor({m, kk, d})};
  for (std::size_t k = 0; k < kk; ++k) {
    const double* lower = chol.data().data() + k * d * d;
    const double log_det = detail::log_det_half(lower, d);
    for (std::size_t i = 0; i < m; ++i)
      out.logp(i, k) = detail::gaussian_point(z.data().data() + i * d, means.data().data() + k * d, lower,
                                              d, log_det, out.solved.data().data() + (i * kk + k) * d);
  }
  return out;
}

GaussianGrads gaussian_logpdf_backward(const Tensor& grad, const Tensor& z, const Tensor& means,
                                       const Tensor& chol, const Tensor& solved) {
  const auto [m, d, kk] = detail::gaussian_dims(z, means, chol);
  GaussianGrads g{Tensor({m, d}), Tensor({kk, d}), Tensor({kk, d, d})};
  std::vector<double> v(m * kk * d);
  for (std::size_t k = 0; k < kk; ++k) {
    const double* lower = chol.data().data() + k * d * d;
    double* dmu = g.d_means.data().data() + k * d;
    double* dl = g.d_chol.data().data() + k * d * d;
    for (std::size_t i = 0; i < m; ++i) {
      const double gik = grad(i, k);
      const double* u = solved.data().data() + (i * kk + k) * d;
      double* vik = v.data() + (i * kk + k) * d;
      detail::back_solve(lower, u, d, vik);
      for (std::size_t r = 0; r < d; ++r) {
        dmu[r] += gik * vik[r];
        for (std::size_t c = 0; c < r; ++c) dl[r * d + c] += gik * vik[r] * u[c];
        dl[r * d + r] += gik * (vik[r] * u[r] - 1.0 / lower[r * d + r]);
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < kk; ++k) {
      const double gik = grad(i, k);
      const double* vik = v.data() + (i * kk + k) * d;
      for (std::size_t r = 0; r < d; ++r) g.d_z(i, r) -= gik * vik[r];
    }
  return g;
}

}  // namespace gmq::kernels::serial
