#include "lcn4/kernels_serial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lcn4::kernels::serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * lda + p];
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += av * b[p * ldb + j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] += s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * lda + i];
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += av * b[p * ldb + j];
    }
  }
}

void conv2d_forward(std::size_t batch, const ConvGeometry& g, std::size_t out_channels,
                    const double* input, const double* kernel, double* output) {
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  const long ks = static_cast<long>(g.ksize), pad = ks / 2;
  const std::size_t plane = g.height * g.width;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* img = input + b * g.channels * plane;
    double* out = output + b * out_channels * plane;
    for (std::size_t o = 0; o < out_channels; ++o) {
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          double s = 0.0;
          for (std::size_t c = 0; c < g.channels; ++c) {
            const double* kern = kernel + (o * g.channels + c) * g.ksize * g.ksize;
            for (long ky = 0; ky < ks; ++ky) {
              const long sy = y + ky - pad;
              if (sy < 0 || sy >= h) continue;
              for (long kx = 0; kx < ks; ++kx) {
                const long sx = x + kx - pad;
                if (sx < 0 || sx >= w) continue;
                s += kern[ky * ks + kx] * img[c * plane + static_cast<std::size_t>(sy * w + sx)];
              }
            }
          }
          out[o * plane + static_cast<std::size_t>(y * w + x)] = s;
        }
      }
    }
  }
}

void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        const double* input, double* output, std::size_t* argmax) {
  const std::size_t oh = height / 2, ow = width / 2;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = p * height * width + 2 * y * width + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t at = p * height * width + (2 * y + dy) * width + 2 * x + dx;
            if (input[at] > input[best]) best = at;
          }
        }
        output[(p * oh + y) * ow + x] = input[best];
        argmax[(p * oh + y) * ow + x] = best;
      }
    }
  }
}

void softmax_axis(std::size_t outer, std::size_t len, std::size_t inner, const double* in,
                  double* out) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * len * inner + j;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) peak = std::max(peak, in[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) total += std::exp(in[base + i * inner] - peak);
      for (std::size_t i = 0; i < len; ++i) {
        out[base + i * inner] = std::exp(in[base + i * inner] - peak) / total;
      }
    }
  }
}

void pairwise_euclidean(std::size_t n, std::size_t k, std::size_t d, const double* u,
                        const double* c, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += (u[i * d + p] - c[j * d + p]) * (u[i * d + p] - c[j * d + p]);
      out[i * k + j] = std::sqrt(s);
    }
  }
}

}  // namespace lcn4::kernels::serial
