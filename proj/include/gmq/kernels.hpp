#pragma once

#include "gmq/tensor.hpp"

// Hot dense kernels used by the autodiff engine. Each kernel exists twice:
// `serial` is the plain reference, `omp` splits the outer loop across OpenMP
// threads. Both perform the same floating-point operations in the same order
// per output element, so their results are bit-identical; the test suite
// checks exactly that. `active` dispatches on the process-wide backend.
namespace gmq::kernels {

enum class Backend { Serial, OpenMP };

void set_backend(Backend b) noexcept;
Backend backend() noexcept;

// Output of the fused Gaussian log-density kernel.
//   logp(i,k) = log N(z_i | mu_k, L_k L_k^T)
//   solved(i,k,:) = L_k^{-1} (z_i - mu_k)
struct GaussianForward {
  Tensor logp;    // m x K
  Tensor solved;  // m x K x d
};

struct GaussianGrads {
  Tensor d_z;      // m x d
  Tensor d_means;  // K x d
  Tensor d_chol;   // K x d x d (lower triangle only)
};

#define GMQ_KERNEL_DECLS                                                              \
  Tensor matmul(const Tensor& a, const Tensor& b);                                    \
  Tensor matmul_tn(const Tensor& a, const Tensor& b);                                 \
  Tensor matmul_nt(const Tensor& a, const Tensor& b);                                 \
  GaussianForward gaussian_logpdf(const Tensor& z, const Tensor& means,               \
                                  const Tensor& chol);                                \
  GaussianGrads gaussian_logpdf_backward(const Tensor& grad, const Tensor& z,         \
                                         const Tensor& means, const Tensor& chol,     \
                                         const Tensor& solved);

namespace serial {
GMQ_KERNEL_DECLS
}
namespace omp {
GMQ_KERNEL_DECLS
}
namespace active {
GMQ_KERNEL_DECLS
}

#undef GMQ_KERNEL_DECLS

}  // namespace gmq::kernels
