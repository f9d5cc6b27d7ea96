#include "lcn4/position_encoding.hpp"

#include <cmath>

#include "lcn4/errors.hpp"
#include "lcn4/ops.hpp"

namespace lcn4::pe {

std::vector<double> linspace_unit(std::size_t n) {
  if (n == 0) throw PreconditionError("linspace needs at least one point");
  if (n == 1) return {-1.0};
  std::vector<double> out(n);
  const double step = 2.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = -1.0 + step * static_cast<double>(i);
  out[n - 1] = 1.0;
  return out;
}

GridEncoding grid_encode(std::size_t batch, std::size_t height, std::size_t width,
                         std::size_t channels) {
  if (channels % 2 != 0) {
    throw PreconditionError("grid encoding needs an even channel count, got " +
                            std::to_string(channels));
  }
  if (batch == 0 || height == 0 || width == 0) {
    throw PreconditionError("grid encoding needs positive B, H, W");
  }
  GridEncoding g;
  g.x_pe = linspace_unit(width);
  g.y_pe = linspace_unit(height);
  std::vector<double> values(batch * height * width * channels);
  std::size_t at = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < height; ++h) {
      for (std::size_t w = 0; w < width; ++w) {
        for (std::size_t c = 0; c < channels; c += 2) {
          values[at++] = g.x_pe[w];
          values[at++] = g.y_pe[h];
        }
      }
    }
  }
  g.grid = Tensor({batch, height, width, channels}, std::move(values));
  return g;
}

Tensor nfc_apply(const Tensor& features) {
  if (features.rank() != 4) {
    throw DimensionError("nfc expects a [B x H x W x C] map, got " + shape_str(features.shape()));
  }
  const auto& s = features.shape();
  return add(features, grid_encode(s[0], s[1], s[2], s[3]).grid);
}

std::vector<double> frequency_sequence(std::size_t count) {
  if (count < 2) throw PreconditionError("frequency sequence needs N >= 2");
  std::vector<double> f(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double exponent = -2.0 * static_cast<double>(n / 2) / static_cast<double>(count);
    f[n] = std::pow(10000.0, exponent);
  }
  return f;
}

namespace {

// Ê = concat(first q of sin(E), first q of cos(E)) along the last axis.
Tensor principal_sincos(const Tensor& expanded, std::size_t q) {
  const std::size_t axis = expanded.rank() - 1;
  Tensor s = narrow(sin(expanded), axis, 0, q);
  Tensor c = narrow(cos(expanded), axis, 0, q);
  return concat({s, c}, axis);
}

}  // namespace

FrequencyEncoding fdc_encode(const Tensor& distances, std::size_t fourier_count,
                             double amplitude) {
  if (distances.rank() != 4) {
    throw DimensionError("fdc expects a [B x H x W x k] distance map, got " +
                         shape_str(distances.shape()));
  }
  const std::size_t k = distances.dim(3);
  if (k % 4 != 0) {
    throw PreconditionError("fdc needs k divisible by 4, got k=" + std::to_string(k));
  }
  const std::size_t quarter = k / 4;
  if (fourier_count < quarter) {
    throw PreconditionError("fdc needs N >= k/4, got N=" + std::to_string(fourier_count) +
                            " for k=" + std::to_string(k));
  }
  const std::vector<double> freqs = frequency_sequence(fourier_count);
  std::vector<double> scaled(freqs);
  for (double& v : scaled) v *= amplitude;

  FrequencyEncoding out;
  out.intensity = mean_axis(distances, 3);
  out.cum_x = cumulative_sum(out.intensity, 2);
  out.cum_y = cumulative_sum(out.intensity, 1);
  out.enc_x = principal_sincos(expand_last(out.cum_x, scaled), quarter);
  out.enc_y = principal_sincos(expand_last(out.cum_y, scaled), quarter);
  out.encoding = concat({out.enc_x, out.enc_y}, 3);
  return out;
}

Tensor sincos_encode(std::size_t batch, std::size_t height, std::size_t width, std::size_t k) {
  if (k % 4 != 0) {
    throw PreconditionError("sine-cosine encoding needs k divisible by 4, got " +
                            std::to_string(k));
  }
  const std::size_t quarter = k / 4;
  std::vector<double> freqs(quarter);
  for (std::size_t j = 0; j < quarter; ++j) {
    freqs[j] = std::pow(10000.0, -4.0 * static_cast<double>(j) / static_cast<double>(k));
  }
  std::vector<double> values(batch * height * width * k);
  std::size_t at = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < height; ++h) {
      for (std::size_t w = 0; w < width; ++w) {
        const double px = static_cast<double>(w);
        const double py = static_cast<double>(h);
        for (std::size_t j = 0; j < quarter; ++j) values[at + j] = std::sin(px * freqs[j]);
        for (std::size_t j = 0; j < quarter; ++j) values[at + quarter + j] = std::cos(px * freqs[j]);
        for (std::size_t j = 0; j < quarter; ++j) values[at + 2 * quarter + j] = std::sin(py * freqs[j]);
        for (std::size_t j = 0; j < quarter; ++j) values[at + 3 * quarter + j] = std::cos(py * freqs[j]);
        at += k;
      }
    }
  }
  return Tensor({batch, height, width, k}, std::move(values));
}

}  // namespace lcn4::pe
