#pragma once

#include <cstddef>
#include <span>

// Raw data-parallel loops behind the differentiable ops. Everything here works
// on contiguous row-major buffers and is parallelised with OpenMP where the
// outer loop is wide enough to amortise a parallel region. Shape validation
// happens one level up, in ops.cpp.
namespace lcn4::kernels {

// Number of OpenMP threads kernels will use (1 when built without OpenMP).
int max_threads();

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

struct ConvGeometry {
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  std::size_t ksize;  // odd; padding is ksize / 2 ("same" output)
};

// cols[(c*ks + ky)*ks + kx][y*W + x] = img[c][y+ky-p][x+kx-p] (zero outside).
void im2col(const ConvGeometry& g, const double* img, double* cols);
// Adjoint of im2col: scatters cols back onto img (accumulating).
void col2im(const ConvGeometry& g, const double* cols, double* img);

// Batched "same" convolution, NCHW input, [Cout x Cin x ks x ks] kernel.
void conv2d_forward(std::size_t batch, const ConvGeometry& g, std::size_t out_channels,
                    const double* input, const double* kernel, double* output);
// Accumulates into grad_input (if non-null) and grad_kernel (if non-null).
void conv2d_backward(std::size_t batch, const ConvGeometry& g, std::size_t out_channels,
                     const double* input, const double* kernel, const double* grad_output,
                     double* grad_input, double* grad_kernel);

// 2x2 / stride 2 max pooling on [planes x H x W] with even H, W. `argmax`
// receives the flat input offset of the winning cell (first in row-major
// order on ties).
void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        const double* input, double* output, std::size_t* argmax);

// Prefix sums along the middle axis of an [outer x len x inner] block.
void cumsum_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                 double* out);
// Suffix sums (the adjoint of cumsum_axis).
void reverse_cumsum_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                         double* out);

// Softmax along the middle axis of an [outer x len x inner] block, max-subtracted.
void softmax_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                  double* out);

// out[i][j] = || u_i - c_j ||_2 for u: [n x d], c: [k x d].
void pairwise_euclidean(std::size_t n, std::size_t k, std::size_t d, const double* u,
                        const double* c, double* out);

}  // namespace lcn4::kernels
