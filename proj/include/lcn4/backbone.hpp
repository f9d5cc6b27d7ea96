#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lcn4/constell.hpp"
#include "lcn4/layers.hpp"
#include "lcn4/tensor.hpp"

namespace lcn4 {

struct NetworkConfig {
  std::array<std::size_t, 4> channels{64, 64, 64, 64};
  std::size_t in_channels = 3;
  std::size_t resolution = 84;
  std::size_t clusters = 64;
  std::size_t heads = 8;
  std::size_t fourier_count = 64;
  double amplitude = 1.0;
  bool stem1_lafcm = true;
  bool stem2_lafcm = true;
  bool constell1 = true;
  bool constell2 = true;
  LafcmFlags flags;
  bool head_width_scaling = true;
  double centroid_momentum = 0.999;
  double centroid_temperature = 1.0;
  std::size_t num_classes = 1;  // width of the classification head

  // Throws ConfigError on inconsistent settings.
  void validate() const;
  // Channels entering block i (0..3), including concatenated stem distances.
  std::size_t block_input_channels(std::size_t block) const;
  std::size_t feature_dim() const { return channels[3]; }
  std::size_t logit2_dim() const;
};

struct ConvBlock {
  Tensor kernel;  // [C_out x C_in x 3 x 3]
  BatchNorm2d bn;
  bool pool = true;

  ConvBlock() = default;
  ConvBlock(std::size_t in, std::size_t out, bool pool, std::mt19937_64& rng);
  // conv -> bn -> relu -> (truncate odd edge) -> 2x2 max pool. NCHW.
  Tensor forward(const Tensor& input, bool train);
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

struct Taps {
  Tensor feat1;         // [B x C3] pooled constellation-1 output
  Tensor feat2;         // [B x C4] pooled constellation-2 output
  Tensor logit_embed1;  // [B x C4] feat2 . projection
  Tensor logit_embed2;  // [B x (k + C4)] pooled constellation-2 D̂ ++ feat2
};

class Network {
 public:
  Network(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  // x: [B x C_in x R x R].
  Taps forward(const Tensor& x, bool train);
  // Channels-last output of the stem stage (after the optional LAFCM).
  Tensor stem_forward(std::size_t index, const Tensor& x, bool train);

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();
  // Centroid banks in block order; disabled blocks are skipped.
  std::vector<std::pair<std::string, CentroidBank*>> banks();

  Tensor& classifier() { return classifier_; }
  Tensor& projection() { return projection_; }
  Tensor& temperature() { return temperature_; }

  void save(const std::string& path, const std::string& config_json);
  // Restores every array; throws IoError on a missing or mis-shaped entry.
  void load(const std::string& path);

 private:
  NetworkConfig config_;
  std::array<ConvBlock, 4> blocks_;
  std::array<CentroidBank, 2> stem_banks_;
  std::array<ConstellParams, 2> constells_;
  Tensor projection_;   // [C4 x C4]
  Tensor classifier_;   // [C4 x num_classes]
  Tensor temperature_;  // scalar, metric-loss scale

  LafcmSettings stem_settings() const;
  LafcmSettings constell_settings() const;
};

// Truncates a trailing odd row/column so that 2x2 pooling applies.
Tensor trim_even(const Tensor& nchw);

}  // namespace lcn4
