#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lcn4/ops.hpp"
#include "lcn4/tensor.hpp"

namespace lcn4 {

// Named handle to a trainable tensor. `decay` marks whether weight decay
// applies (off for batchnorm affine terms and the metric temperature).
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

// Named non-trainable array persisted alongside parameters.
struct BufferRef {
  std::string name;
  std::vector<double>* values;
};

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  Tensor forward(const Tensor& input, bool train) { return batchnorm2d(input, gamma, beta, state, train); }
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

// He-normal conv kernel [out x in x ks x ks].
Tensor kaiming_kernel(std::size_t out, std::size_t in, std::size_t ksize, std::mt19937_64& rng);
// Square linear map [in x out] with N(0, 1/in) entries.
Tensor linear_weight(std::size_t in, std::size_t out, std::mt19937_64& rng);

}  // namespace lcn4
