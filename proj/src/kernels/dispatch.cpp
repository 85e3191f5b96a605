#include <atomic>

#include "gmq/kernels.hpp"

namespace gmq::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
}

void set_backend(Backend b) noexcept { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() noexcept { return g_backend.load(std::memory_order_relaxed); }

namespace active {

#define GMQ_DISPATCH(call) (backend() == Backend::OpenMP ? omp::call : serial::call)

Tensor matmul(const Tensor& a, const Tensor& b) { return GMQ_DISPATCH(matmul(a, b)); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return GMQ_DISPATCH(matmul_tn(a, b)); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return GMQ_DISPATCH(matmul_nt(a, b)); }
GaussianForward gaussian_logpdf(const Tensor& z, const Tensor& means, const Tensor& chol) {
  return GMQ_DISPATCH(gaussian_logpdf(z, means, chol));
}
GaussianGrads gaussian_logpdf_backward(const Tensor& grad, const Tensor& z, const Tensor& means,
                                       const Tensor& chol, const Tensor& solved) {
  return GMQ_DISPATCH(gaussian_logpdf_backward(grad, z, means, chol, solved));
}

#undef GMQ_DISPATCH

}  // namespace active
}  // namespace gmq::kernels
