#pragma once

#include <cstddef>

#include "lcn4/kernels.hpp"

// Plain single-threaded loops with the same contracts as lcn4::kernels.
// Kept as the reference the optimised kernels are tested and benchmarked
// against; nothing in the library calls them.
namespace lcn4::kernels::serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

// Direct seven-loop convolution, no im2col.
void conv2d_forward(std::size_t batch, const ConvGeometry& g, std::size_t out_channels,
                    const double* input, const double* kernel, double* output);

void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        const double* input, double* output, std::size_t* argmax);
void softmax_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                  double* out);
void pairwise_euclidean(std::size_t n, std::size_t k, std::size_t d, const double* u,
                        const double* c, double* out);

}  // namespace lcn4::kernels::serial
