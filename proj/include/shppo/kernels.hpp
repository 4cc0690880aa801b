#pragma once

// Dense f64 kernels used by the autodiff ops.
//
// Every kernel accumulates into its output (C += ...). The parallel versions
// split work over output rows only, so each output element is summed in the
// same order regardless of thread count: results are bit-identical for any
// OMP_NUM_THREADS. The `reference` namespace holds naive serial loops kept as
// the test oracle and benchmark baseline.

#include <cstddef>
#include <span>

namespace shppo::kernels {

// C(m,n) += A(m,k) * B(n,k)^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
// C(m,n) += A(m,k) * B(k,n)
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
// C(m,n) += A(k,m)^T * B(k,n)
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);

// Per-row matrices: W holds `batch` row-major (m,n) blocks.
// y(b,:) += W_b * x(b,:)
void batched_matvec(std::span<const double> w, std::span<const double> x, std::span<double> y,
                    std::size_t batch, std::size_t m, std::size_t n);
// x_grad(b,:) += W_b^T * dy(b,:)
void batched_matvec_t(std::span<const double> w, std::span<const double> dy,
                      std::span<double> dx, std::size_t batch, std::size_t m, std::size_t n);
// dW_b += dy(b,:) outer x(b,:)
void batched_outer(std::span<const double> dy, std::span<const double> x, std::span<double> dw,
                   std::size_t batch, std::size_t m, std::size_t n);

namespace reference {

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void batched_matvec(std::span<const double> w, std::span<const double> x, std::span<double> y,
                    std::size_t batch, std::size_t m, std::size_t n);
void batched_matvec_t(std::span<const double> w, std::span<const double> dy,
                      std::span<double> dx, std::size_t batch, std::size_t m, std::size_t n);
void batched_outer(std::span<const double> dy, std::span<const double> x, std::span<double> dw,
                   std::size_t batch, std::size_t m, std::size_t n);

}  // namespace reference

/// Threads the parallel kernels will use (omp_get_max_threads()).
int max_threads();

}  // namespace shppo::kernels
