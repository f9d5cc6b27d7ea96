#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lcn4/cell_clustering.hpp"
#include "lcn4/layers.hpp"
#include "lcn4/tensor.hpp"

namespace lcn4 {

struct LafcmFlags {
  bool nfc = true;
  bool cfc = true;
  bool fdc = true;
};

// Throws ConfigError when FDC is requested without distance maps to feed it.
void validate(const LafcmFlags& flags);

struct AttentionParams {
  Tensor wq, wk, wv;  // [k x k] each
  Tensor w1, w2;      // output projections, [k x k]
  std::size_t heads = 1;
  // Scale logits by sqrt(k/h); false uses sqrt(k).
  bool head_width_scaling = true;

  static AttentionParams init(std::size_t width, std::size_t heads, std::mt19937_64& rng);
  std::size_t width() const { return wq.dim(0); }
  void collect(const std::string& prefix, std::vector<ParamRef>& params);
};

// Softmax weights of the last attention call, [B x h x T x T] row-major.
struct AttentionTrace {
  std::vector<double> weights;
  std::size_t batch = 0, heads = 0, tokens = 0;
};

// M = encoding + D̂, reshaped to [B x HW x k].
Tensor positional_embed(const Tensor& distance_map, const Tensor& encoding);

// Multi-head cross attention with Q = K = `embedded` and V = `values`, both
// [B x T x k]. Heads are concatenated and projected by w1 then w2.
Tensor multihead_attention(const Tensor& embedded, const Tensor& values,
                           const AttentionParams& params, AttentionTrace* trace = nullptr);

struct LafcmOutput {
  Tensor features;   // U after NFC (or U itself)
  Tensor distances;  // D̂ [B x H x W x k]; undefined when CFC is off
  Tensor encoding;   // E_f or sine-cosine P; undefined unless requested
};

struct LafcmSettings {
  LafcmFlags flags;
  std::size_t fourier_count = 64;
  double amplitude = 1.0;
  bool with_encoding = true;  // stems run without FDC and need no encoding
};

// U is channels-last. In train mode the bank is seeded/updated from the same
// features that produced the distances.
LafcmOutput lafcm_forward(const Tensor& features, const LafcmSettings& settings,
                          CentroidBank& bank, bool train);

struct ConstellParams {
  AttentionParams attention;
  Tensor fusion_kernel;  // [C x (C+k) x 1 x 1]
  BatchNorm2d fusion_bn;
  CentroidBank bank;

  ConstellParams() = default;
  ConstellParams(std::size_t channels, std::size_t clusters, std::size_t heads,
                 std::mt19937_64& rng, double centroid_momentum = 0.999,
                 double centroid_temperature = 1.0);
  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<BufferRef>& buffers);
};

struct ConstellOutput {
  Tensor features;   // [B x H x W x C]
  Tensor distances;  // D̂, undefined when CFC is off
};

// LAFCM, cross-attention positional embedding and channel fusion on a
// channels-last feature map. With CFC off the block reduces to NFC.
ConstellOutput constell_forward(const Tensor& features, const LafcmSettings& settings,
                                ConstellParams& params, bool train,
                                AttentionTrace* trace = nullptr);

}  // namespace lcn4
