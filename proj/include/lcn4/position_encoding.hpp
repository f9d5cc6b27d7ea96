#pragma once

#include <cstddef>
#include <vector>

#include "lcn4/tensor.hpp"

// Positional signals for channels-last feature maps [B x H x W x C]:
// grid coordinates added to convolutional features, the data-dependent
// frequency encoding built from cluster distance maps, and the fixed 2-D
// sine-cosine encoding used by the baseline constellation block.
namespace lcn4::pe {

// n evenly spaced points from -1 to 1; a single point is [-1].
std::vector<double> linspace_unit(std::size_t n);

struct GridEncoding {
  Tensor grid;                // [B x H x W x C], constant
  std::vector<double> x_pe;   // length W
  std::vector<double> y_pe;   // length H
};

// Channel 2j holds x_pe[w], channel 2j+1 holds y_pe[h]; C must be even.
GridEncoding grid_encode(std::size_t batch, std::size_t height, std::size_t width,
                         std::size_t channels);

// U + grid, unit scale.
Tensor nfc_apply(const Tensor& features);

// f[n] = 10000^(-2*(n div 2)/N), n in [0, N).
std::vector<double> frequency_sequence(std::size_t count);

struct FrequencyEncoding {
  Tensor encoding;   // E_f   [B x H x W x k]
  Tensor intensity;  // I     [B x H x W]
  Tensor cum_x;      // I_x   running sum along width
  Tensor cum_y;      // I_y   running sum along height
  Tensor enc_x;      // [B x H x W x k/2]: k/4 sin then k/4 cos
  Tensor enc_y;
};

// Frequency-domain distance encoding of a distance map [B x H x W x k].
// Differentiable with respect to the distance map.
FrequencyEncoding fdc_encode(const Tensor& distances, std::size_t fourier_count,
                             double amplitude = 1.0);

// Fixed 2-D sinusoidal encoding [B x H x W x k]. Channels [0, k/4) are
// sin(w * f_j), [k/4, k/2) cos(w * f_j), then the same for h, with
// f_j = 10000^(-4j/k).
Tensor sincos_encode(std::size_t batch, std::size_t height, std::size_t width, std::size_t k);

}  // namespace lcn4::pe
