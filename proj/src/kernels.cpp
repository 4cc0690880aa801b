#include "shppo/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <cstdint>

namespace shppo::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

constexpr std::size_t kRowBlock = 64;
constexpr std::size_t kRowTile = 16;

inline double dot(const double* __restrict a, const double* __restrict b, std::size_t k) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t p = 0;
  for (; p + 8 <= k; p += 8) {
    for (std::size_t u = 0; u < 8; ++u) lanes[u] += a[p + u] * b[p + u];
  }
  double s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
             ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; p < k; ++p) s += a[p] * b[p];
  return s;
}

inline void axpy(double alpha, const double* __restrict x, double* __restrict y,
                 std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  assert(a.size() >= m * k && b.size() >= n * k && c.size() >= m * n);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  // Rows of A are tiled; within a tile, B is swept in cache-resident blocks.
  const auto tiles = static_cast<std::int64_t>((m + kRowTile - 1) / kRowTile);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::int64_t t = 0; t < tiles; ++t) {
    const std::size_t ib = static_cast<std::size_t>(t) * kRowTile;
    const std::size_t ie = std::min(m, ib + kRowTile);
    for (std::size_t jb = 0; jb < n; jb += kRowBlock) {
      const std::size_t je = std::min(n, jb + kRowBlock);
      for (std::size_t i = ib; i < ie; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * n;
        for (std::size_t j = jb; j < je; ++j) ci[j] += dot(ai, B + j * k, k);
      }
    }
  }
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  assert(a.size() >= m * k && b.size() >= k * n && c.size() >= m * n);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  constexpr std::size_t kDepthBlock = 256;
  const auto tiles = static_cast<std::int64_t>((m + kRowTile - 1) / kRowTile);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::int64_t t = 0; t < tiles; ++t) {
    const std::size_t ib = static_cast<std::size_t>(t) * kRowTile;
    const std::size_t ie = std::min(m, ib + kRowTile);
    for (std::size_t pb = 0; pb < k; pb += kDepthBlock) {
      const std::size_t pe = std::min(k, pb + kDepthBlock);
      for (std::size_t i = ib; i < ie; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * n;
        for (std::size_t p = pb; p < pe; ++p) axpy(ai[p], B + p * n, ci, n);
      }
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  assert(a.size() >= k * m && b.size() >= k * n && c.size() >= m * n);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const auto blocks = static_cast<std::int64_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t ib = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t ie = std::min(m, ib + kRowBlock);
    for (std::size_t p = 0; p < k; ++p) {
      const double* ap = A + p * m;
      const double* bp = B + p * n;
      for (std::size_t i = ib; i < ie; ++i) {
        const double s = ap[i];
        if (s != 0.0) axpy(s, bp, C + i * n, n);
      }
    }
  }
}

void batched_matvec(std::span<const double> w, std::span<const double> x, std::span<double> y,
                    std::size_t batch, std::size_t m, std::size_t n) {
  assert(w.size() >= batch * m * n && x.size() >= batch * n && y.size() >= batch * m);
  const auto rows = static_cast<std::int64_t>(batch);
#pragma omp parallel for schedule(static) if (batch * m * n > kParallelWork)
  for (std::int64_t b = 0; b < rows; ++b) {
    const double* wb = w.data() + b * m * n;
    const double* xb = x.data() + b * n;
    double* yb = y.data() + b * m;
    for (std::size_t i = 0; i < m; ++i) yb[i] += dot(wb + i * n, xb, n);
  }
}

void batched_matvec_t(std::span<const double> w, std::span<const double> dy,
                      std::span<double> dx, std::size_t batch, std::size_t m, std::size_t n) {
  assert(w.size() >= batch * m * n && dy.size() >= batch * m && dx.size() >= batch * n);
  const auto rows = static_cast<std::int64_t>(batch);
#pragma omp parallel for schedule(static) if (batch * m * n > kParallelWork)
  for (std::int64_t b = 0; b < rows; ++b) {
    const double* wb = w.data() + b * m * n;
    const double* gb = dy.data() + b * m;
    double* xb = dx.data() + b * n;
    for (std::size_t i = 0; i < m; ++i) axpy(gb[i], wb + i * n, xb, n);
  }
}

void batched_outer(std::span<const double> dy, std::span<const double> x, std::span<double> dw,
                   std::size_t batch, std::size_t m, std::size_t n) {
  assert(dw.size() >= batch * m * n && dy.size() >= batch * m && x.size() >= batch * n);
  const auto rows = static_cast<std::int64_t>(batch);
#pragma omp parallel for schedule(static) if (batch * m * n > kParallelWork)
  for (std::int64_t b = 0; b < rows; ++b) {
    const double* gb = dy.data() + b * m;
    const double* xb = x.data() + b * n;
    double* wb = dw.data() + b * m * n;
    for (std::size_t i = 0; i < m; ++i) axpy(gb[i], xb, wb + i * n, n);
  }
}

namespace reference {

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] += s;
    }
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] += s;
    }
}

void batched_matvec(std::span<const double> w, std::span<const double> x, std::span<double> y,
                    std::size_t batch, std::size_t m, std::size_t n) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += w[(b * m + i) * n + j] * x[b * n + j];
      y[b * m + i] += s;
    }
}

void batched_matvec_t(std::span<const double> w, std::span<const double> dy,
                      std::span<double> dx, std::size_t batch, std::size_t m, std::size_t n) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += w[(b * m + i) * n + j] * dy[b * m + i];
      dx[b * n + j] += s;
    }
}

void batched_outer(std::span<const double> dy, std::span<const double> x, std::span<double> dw,
                   std::size_t batch, std::size_t m, std::size_t n) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dw[(b * m + i) * n + j] += dy[b * m + i] * x[b * n + j];
}

}  // namespace reference
}  // namespace shppo::kernels
