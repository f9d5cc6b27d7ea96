#include "lcn4/constell.hpp"

#include <cmath>

#include "lcn4/errors.hpp"
#include "lcn4/ops.hpp"
#include "lcn4/position_encoding.hpp"

namespace lcn4 {

void validate(const LafcmFlags& flags) {
  if (flags.fdc && !flags.cfc) {
    throw ConfigError("fdc requires cfc: the frequency encoding is built from distance maps");
  }
}

AttentionParams AttentionParams::init(std::size_t width, std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || width % heads != 0) {
    throw PreconditionError("attention width " + std::to_string(width) +
                            " is not divisible by " + std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.wq = linear_weight(width, width, rng);
  p.wk = linear_weight(width, width, rng);
  p.wv = linear_weight(width, width, rng);
  p.w1 = linear_weight(width, width, rng);
  p.w2 = linear_weight(width, width, rng);
  p.heads = heads;
  return p;
}

void AttentionParams::collect(const std::string& prefix, std::vector<ParamRef>& params) {
  params.push_back({prefix + ".wq", wq, true});
  params.push_back({prefix + ".wk", wk, true});
  params.push_back({prefix + ".wv", wv, true});
  params.push_back({prefix + ".w1", w1, true});
  params.push_back({prefix + ".w2", w2, true});
}

Tensor positional_embed(const Tensor& distance_map, const Tensor& encoding) {
  if (distance_map.rank() != 4 || distance_map.shape() != encoding.shape()) {
    throw DimensionError("positional_embed: encoding " + shape_str(encoding.shape()) +
                         " does not match distance map " + shape_str(distance_map.shape()));
  }
  const auto& s = distance_map.shape();
  return reshape(add(encoding, distance_map), {s[0], s[1] * s[2], s[3]});
}

namespace {

// [B x T x k] -> [B*h x T x k/h]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t b = x.dim(0), t = x.dim(1), k = x.dim(2), dh = k / heads;
  Tensor y = permute(reshape(x, {b, t, heads, dh}), {0, 2, 1, 3});
  return reshape(y, {b * heads, t, dh});
}

// [B*h x T x k/h] -> [B*T x k]
Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t heads) {
  const std::size_t t = x.dim(1), dh = x.dim(2);
  Tensor y = permute(reshape(x, {batch, heads, t, dh}), {0, 2, 1, 3});
  return reshape(y, {batch * t, heads * dh});
}

}  // namespace

Tensor multihead_attention(const Tensor& embedded, const Tensor& values,
                           const AttentionParams& params, AttentionTrace* trace) {
  if (embedded.rank() != 3 || embedded.shape() != values.shape()) {
    throw DimensionError("attention inputs must share a [B x T x k] shape, got " +
                         shape_str(embedded.shape()) + " and " + shape_str(values.shape()));
  }
  const std::size_t b = embedded.dim(0), t = embedded.dim(1), k = embedded.dim(2);
  const std::size_t h = params.heads;
  if (h == 0 || k % h != 0) {
    throw PreconditionError("attention width " + std::to_string(k) + " is not divisible by " +
                            std::to_string(h) + " heads");
  }
  if (params.width() != k) {
    throw DimensionError("attention weights are " + shape_str(params.wq.shape()) +
                         " but tokens have width " + std::to_string(k));
  }

  Tensor m = reshape(embedded, {b * t, k});
  Tensor v = reshape(values, {b * t, k});
  Tensor fq = split_heads(reshape(matmul(m, params.wq), {b, t, k}), h);
  Tensor fk = split_heads(reshape(matmul(m, params.wk), {b, t, k}), h);
  Tensor fv = split_heads(reshape(matmul(v, params.wv), {b, t, k}), h);

  const double width = params.head_width_scaling ? static_cast<double>(k / h) : static_cast<double>(k);
  Tensor logits = scale(bmm(fq, permute(fk, {0, 2, 1})), 1.0 / std::sqrt(width));
  Tensor weights = softmax(logits, 2);
  if (trace) {
    trace->weights.assign(weights.data().begin(), weights.data().end());
    trace->batch = b;
    trace->heads = h;
    trace->tokens = t;
  }
  Tensor heads_out = merge_heads(bmm(weights, fv), b, h);
  Tensor projected = matmul(matmul(heads_out, params.w1), params.w2);
  return reshape(projected, {b, t, k});
}

LafcmOutput lafcm_forward(const Tensor& features, const LafcmSettings& settings,
                          CentroidBank& bank, bool train) {
  validate(settings.flags);
  LafcmOutput out;
  out.features = settings.flags.nfc ? pe::nfc_apply(features) : features;
  if (!settings.flags.cfc) return out;

  bank.set_training(train);
  out.distances = cluster_distances(out.features, bank);
  if (train) update_centroids(out.features, bank, out.distances);

  if (settings.with_encoding) {
    const auto& s = out.distances.shape();
    if (settings.flags.fdc) {
      out.encoding = pe::fdc_encode(out.distances, settings.fourier_count, settings.amplitude).encoding;
    } else {
      out.encoding = pe::sincos_encode(s[0], s[1], s[2], s[3]);
    }
  }
  return out;
}

ConstellParams::ConstellParams(std::size_t channels, std::size_t clusters, std::size_t heads,
                               std::mt19937_64& rng, double centroid_momentum,
                               double centroid_temperature)
    : attention(AttentionParams::init(clusters, heads, rng)),
      fusion_kernel(kaiming_kernel(channels, channels + clusters, 1, rng)),
      fusion_bn(channels),
      bank(clusters, channels, centroid_momentum, centroid_temperature, rng()) {}

void ConstellParams::collect(const std::string& prefix, std::vector<ParamRef>& params,
                             std::vector<BufferRef>& buffers) {
  attention.collect(prefix + ".attn", params);
  params.push_back({prefix + ".fusion.kernel", fusion_kernel, true});
  fusion_bn.collect(prefix + ".fusion.bn", params, buffers);
}

ConstellOutput constell_forward(const Tensor& features, const LafcmSettings& settings,
                                ConstellParams& params, bool train, AttentionTrace* trace) {
  if (features.rank() != 4) {
    throw DimensionError("constell expects [B x H x W x C], got " + shape_str(features.shape()));
  }
  const std::size_t channels = features.dim(3);
  if (params.fusion_kernel.dim(0) != channels) {
    throw DimensionError("constell fusion expects " + std::to_string(params.fusion_kernel.dim(0)) +
                         " channels, got " + std::to_string(channels));
  }
  LafcmSettings with_pe = settings;
  with_pe.with_encoding = true;
  LafcmOutput lafcm = lafcm_forward(features, with_pe, params.bank, train);
  if (!lafcm.distances.defined()) return {lafcm.features, Tensor()};

  const auto& s = lafcm.distances.shape();
  const std::size_t b = s[0], h = s[1], w = s[2], k = s[3];
  Tensor embedded = positional_embed(lafcm.distances, lafcm.encoding);
  Tensor attended = multihead_attention(embedded, reshape(lafcm.distances, {b, h * w, k}),
                                        params.attention, trace);

  Tensor joined = concat({lafcm.features, reshape(attended, {b, h, w, k})}, 3);
  Tensor fused = conv2d(permute(joined, {0, 3, 1, 2}), params.fusion_kernel);
  fused = relu(params.fusion_bn.forward(fused, train));
  return {permute(fused, {0, 2, 3, 1}), lafcm.distances};
}

}  // namespace lcn4
