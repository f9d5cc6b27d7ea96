#include "lcn4/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcn4::kernels {

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 24;
constexpr std::size_t kDepthBlock = 256;
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

// Register tile: accumulates a kTileRows x kTileCols block of C over `depth`.
inline void gemm_tile(std::size_t depth, const double* __restrict a, std::size_t lda,
                      const double* __restrict b, std::size_t ldb, double* __restrict c,
                      std::size_t ldc) {
  double acc[kTileRows][kTileCols] = {};
  for (std::size_t p = 0; p < depth; ++p) {
    const double* brow = b + p * ldb;
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const double av = a[r * lda + p];
#pragma omp simd
      for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r) {
#pragma omp simd
    for (std::size_t j = 0; j < kTileCols; ++j) c[r * ldc + j] += acc[r][j];
  }
}

inline void gemm_edge(std::size_t rows, std::size_t cols, std::size_t depth, const double* a,
                      std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    for (std::size_t p = 0; p < depth; ++p) {
      const double av = a[r * lda + p];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr std::size_t kDotBlock = 4;
constexpr std::size_t kLanes = 8;
constexpr std::size_t kDotDepth = 1024;

inline double dot(std::size_t k, const double* __restrict x, const double* __restrict y) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t p = 0; p < k; ++p) s += x[p] * y[p];
  return s;
}

// c[r][q] += <a_r, b_q> for a 4 x 4 block; every loaded lane feeds four
// multiply-adds.
inline void dot_block(std::size_t k, const double* __restrict a, std::size_t lda,
                      const double* __restrict b, std::size_t ldb, double* __restrict c,
                      std::size_t ldc) {
  double acc[kDotBlock][kDotBlock][kLanes] = {};
  const std::size_t body = k - k % kLanes;
  for (std::size_t p = 0; p < body; p += kLanes) {
    for (std::size_t r = 0; r < kDotBlock; ++r) {
      for (std::size_t q = 0; q < kDotBlock; ++q) {
#pragma omp simd
        for (std::size_t l = 0; l < kLanes; ++l) {
          acc[r][q][l] += a[r * lda + p + l] * b[q * ldb + p + l];
        }
      }
    }
  }
  for (std::size_t r = 0; r < kDotBlock; ++r) {
    for (std::size_t q = 0; q < kDotBlock; ++q) {
      double s = 0.0;
      for (std::size_t l = 0; l < kLanes; ++l) s += acc[r][q][l];
      for (std::size_t p = body; p < k; ++p) s += a[r * lda + p] * b[q * ldb + p];
      c[r * ldc + q] += s;
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, std::size_t ld,
               double* dst) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * ld + j];
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  const std::size_t col_tiles = (n + kTileCols - 1) / kTileCols;
  const bool parallel = m * n * k >= kParallelWork && col_tiles > 1;
  for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
    const std::size_t depth = std::min(kDepthBlock, k - k0);
    // Column tiles are independent; each thread owns disjoint columns of C.
#pragma omp parallel for schedule(static) if (parallel)
    for (std::size_t t = 0; t < col_tiles; ++t) {
      const std::size_t j = t * kTileCols;
      const std::size_t cols = std::min(kTileCols, n - j);
      for (std::size_t i = 0; i < m; i += kTileRows) {
        const std::size_t rows = std::min(kTileRows, m - i);
        const double* ablk = a + i * lda + k0;
        const double* bblk = b + k0 * ldb + j;
        double* cblk = c + i * ldc + j;
        if (rows == kTileRows && cols == kTileCols) {
          gemm_tile(depth, ablk, lda, bblk, ldb, cblk, ldc);
        } else {
          gemm_edge(rows, cols, depth, ablk, lda, bblk, ldb, cblk, ldc);
        }
      }
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  // Long shared dimension (weight gradients): blocks of dot products over
  // contiguous rows.
  if (k >= 4 * std::max(m, n)) {
    const std::size_t row_blocks = (m + kDotBlock - 1) / kDotBlock;
    const bool parallel = m * n * k >= kParallelWork && row_blocks > 1;
    // Depth chunks keep the touched slices of A and B cache resident.
    for (std::size_t k0 = 0; k0 < k; k0 += kDotDepth) {
      const std::size_t depth = std::min(kDotDepth, k - k0);
#pragma omp parallel for schedule(static) if (parallel)
      for (std::size_t t = 0; t < row_blocks; ++t) {
        const std::size_t i = t * kDotBlock;
        const std::size_t rows = std::min(kDotBlock, m - i);
        const double* ablk = a + i * lda + k0;
        for (std::size_t j = 0; j < n; j += kDotBlock) {
          const std::size_t cols = std::min(kDotBlock, n - j);
          const double* bblk = b + j * ldb + k0;
          if (rows == kDotBlock && cols == kDotBlock) {
            dot_block(depth, ablk, lda, bblk, ldb, c + i * ldc + j, ldc);
          } else {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t q = 0; q < cols; ++q) {
                c[(i + r) * ldc + j + q] += dot(depth, ablk + r * lda, bblk + q * ldb);
              }
            }
          }
        }
      }
    }
    return;
  }
  std::vector<double> bt(k * n);
  transpose(n, k, b, ldb, bt.data());
  gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<double> at(m * k);
  transpose(k, m, a, lda, at.data());
  gemm_nn(m, n, k, at.data(), k, b, ldb, c, ldc);
}

void im2col(const ConvGeometry& g, const double* img, double* cols) {
  const std::size_t ks = g.ksize;
  const long pad = static_cast<long>(ks / 2);
  const long H = static_cast<long>(g.height);
  const long W = static_cast<long>(g.width);
  const std::size_t plane = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* src = img + c * plane;
    for (std::size_t ky = 0; ky < ks; ++ky) {
      for (std::size_t kx = 0; kx < ks; ++kx) {
        double* dst = cols + ((c * ks + ky) * ks + kx) * plane;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        const long x_lo = std::max(0L, -dx);
        const long x_hi = std::min(W, W - dx);
        for (long y = 0; y < H; ++y) {
          double* row = dst + y * W;
          const long sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(row, row + W, 0.0);
            continue;
          }
          for (long x = 0; x < x_lo; ++x) row[x] = 0.0;
          const double* srow = src + sy * W + dx;
          for (long x = x_lo; x < x_hi; ++x) row[x] = srow[x];
          for (long x = x_hi; x < W; ++x) row[x] = 0.0;
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* img) {
  const std::size_t ks = g.ksize;
  const long pad = static_cast<long>(ks / 2);
  const long H = static_cast<long>(g.height);
  const long W = static_cast<long>(g.width);
  const std::size_t plane = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* dst = img + c * plane;
    for (std::size_t ky = 0; ky < ks; ++ky) {
      for (std::size_t kx = 0; kx < ks; ++kx) {
        const double* src = cols + ((c * ks + ky) * ks + kx) * plane;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        const long x_lo = std::max(0L, -dx);
        const long x_hi = std::min(W, W - dx);
        for (long y = 0; y < H; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const double* row = src + y * W;
          double* drow = dst + sy * W + dx;
          for (long x = x_lo; x < x_hi; ++x) drow[x] += row[x];
        }
      }
    }
  }
}

void conv2d_forward(std::size_t batch, const ConvGeometry& g, std::size_t out_channels,
                    const double* input, const double* kernel, double* output) {
  const std::size_t plane = g.height * g.width;
  const std::size_t patch = g.channels * g.ksize * g.ksize;
  const std::size_t in_stride = g.channels * plane;
  const std::size_t out_stride = out_channels * plane;
  if (g.ksize == 1) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(output + b * out_stride, output + (b + 1) * out_stride, 0.0);
      gemm_nn(out_channels, plane, patch, kernel, patch, input + b * in_stride, plane,
              output + b * out_stride, plane);
    }
    return;
  }
  std::vector<double> cols(patch * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(g, input + b * in_stride, cols.data());
    std::fill(output + b * out_stride, output + (b + 1) * out_stride, 0.0);
    gemm_nn(out_channels, plane, patch, kernel, patch, cols.data(), plane,
            output + b * out_stride, plane);
  }
}

void conv2d_backward(std::size_t batch, const ConvGeometry& g, std::size_t out_channels,
                     const double* input, const double* kernel, const double* grad_output,
                     double* grad_input, double* grad_kernel) {
  const std::size_t plane = g.height * g.width;
  const std::size_t patch = g.channels * g.ksize * g.ksize;
  const std::size_t in_stride = g.channels * plane;
  const std::size_t out_stride = out_channels * plane;
  const bool direct = g.ksize == 1;
  std::vector<double> cols(direct ? 0 : patch * plane);
  std::vector<double> kernel_t;
  if (grad_input) {
    kernel_t.resize(patch * out_channels);
    transpose(out_channels, patch, kernel, patch, kernel_t.data());
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const double* gout = grad_output + b * out_stride;
    if (grad_kernel) {
      const double* src = input + b * in_stride;
      if (!direct) {
        im2col(g, src, cols.data());
        src = cols.data();
      }
      gemm_nt(out_channels, patch, plane, gout, plane, src, plane, grad_kernel, patch);
    }
    if (grad_input) {
      if (direct) {
        gemm_nn(patch, plane, out_channels, kernel_t.data(), out_channels, gout, plane,
                grad_input + b * in_stride, plane);
      } else {
        std::fill(cols.begin(), cols.end(), 0.0);
        gemm_nn(patch, plane, out_channels, kernel_t.data(), out_channels, gout, plane,
                cols.data(), plane);
        col2im(g, cols.data(), grad_input + b * in_stride);
      }
    }
  }
}

void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        const double* input, double* output, std::size_t* argmax) {
  const std::size_t oh = height / 2;
  const std::size_t ow = width / 2;
#pragma omp parallel for schedule(static) if (planes * height * width >= kParallelWork)
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t in_base = p * height * width;
    const std::size_t out_base = p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t r0 = in_base + (2 * y) * width + 2 * x;
        const std::size_t r1 = r0 + width;
        std::size_t best = r0;
        if (input[r0 + 1] > input[best]) best = r0 + 1;
        if (input[r1] > input[best]) best = r1;
        if (input[r1 + 1] > input[best]) best = r1 + 1;
        output[out_base + y * ow + x] = input[best];
        argmax[out_base + y * ow + x] = best;
      }
    }
  }
}

void cumsum_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                 double* out) {
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = in + o * len * inner;
    double* dst = out + o * len * inner;
    std::copy(src, src + inner, dst);
    for (std::size_t i = 1; i < len; ++i) {
      for (std::size_t j = 0; j < inner; ++j) {
        dst[i * inner + j] = dst[(i - 1) * inner + j] + src[i * inner + j];
      }
    }
  }
}

void reverse_cumsum_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                         double* out) {
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = in + o * len * inner;
    double* dst = out + o * len * inner;
    std::copy(src + (len - 1) * inner, src + len * inner, dst + (len - 1) * inner);
    for (std::size_t i = len - 1; i-- > 0;) {
      for (std::size_t j = 0; j < inner; ++j) {
        dst[i * inner + j] = dst[(i + 1) * inner + j] + src[i * inner + j];
      }
    }
  }
}

void softmax_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                  double* out) {
#pragma omp parallel for schedule(static) if (outer * len * inner >= kParallelWork)
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const double* src = in + o * len * inner + j;
      double* dst = out + o * len * inner + j;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) peak = std::max(peak, src[i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        dst[i * inner] = std::exp(src[i * inner] - peak);
        total += dst[i * inner];
      }
      const double inv = 1.0 / total;
      for (std::size_t i = 0; i < len; ++i) dst[i * inner] *= inv;
    }
  }
}

void pairwise_euclidean(std::size_t n, std::size_t k, std::size_t d, const double* u,
                        const double* c, double* out) {
#pragma omp parallel for schedule(static) if (n * k * d >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ui = u + i * d;
    for (std::size_t j = 0; j < k; ++j) {
      const double* cj = c + j * d;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = ui[p] - cj[p];
        s += diff * diff;
      }
      out[i * k + j] = std::sqrt(s);
    }
  }
}

}  // namespace lcn4::kernels
