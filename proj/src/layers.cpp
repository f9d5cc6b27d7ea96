#include "lcn4/layers.hpp"

#include <cmath>

namespace lcn4 {

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      state(channels) {}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamRef>& params,
                          std::vector<BufferRef>& buffers) {
  params.push_back({prefix + ".gamma", gamma, false});
  params.push_back({prefix + ".beta", beta, false});
  buffers.push_back({prefix + ".running_mean", &state.running_mean});
  buffers.push_back({prefix + ".running_var", &state.running_var});
}

Tensor kaiming_kernel(std::size_t out, std::size_t in, std::size_t ksize, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * ksize * ksize));
  return Tensor::randn({out, in, ksize, ksize}, rng, stddev, true);
}

Tensor linear_weight(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
}

}  // namespace lcn4
