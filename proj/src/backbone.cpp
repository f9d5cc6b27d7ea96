#include "lcn4/backbone.hpp"

#include <algorithm>

#include "lcn4/checkpoint.hpp"
#include "lcn4/errors.hpp"
#include "lcn4/ops.hpp"

namespace lcn4 {

void NetworkConfig::validate() const {
  lcn4::validate(flags);
  for (std::size_t c : channels) {
    if (c == 0 || c % 2 != 0) throw ConfigError("block channels must be positive and even");
  }
  if (clusters == 0 || clusters % 4 != 0) throw ConfigError("clusters (k) must be a positive multiple of 4");
  if (heads == 0 || clusters % heads != 0) throw ConfigError("clusters (k) must be divisible by heads (h)");
  if (flags.fdc && fourier_count < clusters / 4) {
    throw ConfigError("fourier_count (N) must be at least k/4");
  }
  if (fourier_count < 2) throw ConfigError("fourier_count (N) must be at least 2");
  if (resolution < 16) throw ConfigError("resolution must be at least 16 for four pooling stages");
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (centroid_momentum < 0.0 || centroid_momentum > 1.0) {
    throw ConfigError("centroid_momentum must lie in [0, 1]");
  }
  if (centroid_temperature <= 0.0) throw ConfigError("centroid_temperature must be positive");
}

std::size_t NetworkConfig::block_input_channels(std::size_t block) const {
  switch (block) {
    case 0: return in_channels;
    case 1: return channels[0] + (stem1_lafcm && flags.cfc ? clusters : 0);
    case 2: return channels[1] + (stem2_lafcm && flags.cfc ? clusters : 0);
    case 3: return channels[2];
    default: throw PreconditionError("block index out of range");
  }
}

std::size_t NetworkConfig::logit2_dim() const {
  return channels[3] + (constell2 && flags.cfc ? clusters : 0);
}

ConvBlock::ConvBlock(std::size_t in, std::size_t out, bool pool_flag, std::mt19937_64& rng)
    : kernel(kaiming_kernel(out, in, 3, rng)), bn(out), pool(pool_flag) {}

Tensor trim_even(const Tensor& x) {
  Tensor y = x;
  if (y.dim(2) % 2) y = narrow(y, 2, 0, y.dim(2) - 1);
  if (y.dim(3) % 2) y = narrow(y, 3, 0, y.dim(3) - 1);
  return y;
}

Tensor ConvBlock::forward(const Tensor& input, bool train) {
  Tensor y = relu(bn.forward(conv2d(input, kernel), train));
  return pool ? maxpool2d(trim_even(y)) : y;
}

void ConvBlock::collect(const std::string& prefix, std::vector<ParamRef>& params,
                        std::vector<BufferRef>& buffers) {
  params.push_back({prefix + ".kernel", kernel, true});
  bn.collect(prefix + ".bn", params, buffers);
}

Network::Network(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_.channels;
  for (std::size_t i = 0; i < 4; ++i) {
    blocks_[i] = ConvBlock(config_.block_input_channels(i), c[i], true, rng);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    stem_banks_[i] = CentroidBank(config_.clusters, c[i], config_.centroid_momentum,
                                  config_.centroid_temperature, rng());
    constells_[i] = ConstellParams(c[i + 2], config_.clusters, config_.heads, rng,
                                   config_.centroid_momentum, config_.centroid_temperature);
    constells_[i].attention.head_width_scaling = config_.head_width_scaling;
  }
  projection_ = linear_weight(c[3], c[3], rng);
  classifier_ = linear_weight(c[3], config_.num_classes, rng);
  temperature_ = Tensor::full({1}, 10.0, true);
}

LafcmSettings Network::stem_settings() const {
  LafcmSettings s;
  s.flags = config_.flags;
  s.flags.fdc = false;
  s.fourier_count = config_.fourier_count;
  s.amplitude = config_.amplitude;
  s.with_encoding = false;
  return s;
}

LafcmSettings Network::constell_settings() const {
  LafcmSettings s;
  s.flags = config_.flags;
  s.fourier_count = config_.fourier_count;
  s.amplitude = config_.amplitude;
  return s;
}

Tensor Network::stem_forward(std::size_t index, const Tensor& x, bool train) {
  Tensor y = blocks_[index].forward(x, train);
  const bool lafcm = index == 0 ? config_.stem1_lafcm : config_.stem2_lafcm;
  if (!lafcm) return permute(y, {0, 2, 3, 1});
  LafcmOutput out = lafcm_forward(permute(y, {0, 2, 3, 1}), stem_settings(), stem_banks_[index], train);
  if (!out.distances.defined()) return out.features;
  return concat({out.features, out.distances}, 3);
}

Taps Network::forward(const Tensor& x, bool train) {
  const std::size_t r = config_.resolution;
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(2) != r || x.dim(3) != r) {
    throw DimensionError("network expects [B x " + std::to_string(config_.in_channels) + " x " +
                         std::to_string(r) + " x " + std::to_string(r) + "], got " +
                         shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < 2; ++i) h = permute(stem_forward(i, h, train), {0, 3, 1, 2});

  Taps taps;
  Tensor constell2_distances;
  for (std::size_t i = 0; i < 2; ++i) {
    h = blocks_[i + 2].forward(h, train);
    const bool enabled = i == 0 ? config_.constell1 : config_.constell2;
    if (enabled) {
      ConstellOutput out = constell_forward(permute(h, {0, 2, 3, 1}), constell_settings(),
                                            constells_[i], train);
      h = permute(out.features, {0, 3, 1, 2});
      if (i == 1) constell2_distances = out.distances;
    }
    (i == 0 ? taps.feat1 : taps.feat2) = global_avg_pool(h);
  }

  taps.logit_embed1 = matmul(taps.feat2, projection_);
  if (constell2_distances.defined()) {
    Tensor pooled = mean_axis(mean_axis(constell2_distances, 1), 1);
    taps.logit_embed2 = concat({pooled, taps.feat2}, 1);
  } else {
    taps.logit_embed2 = taps.feat2;
  }
  return taps;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> params;
  std::vector<BufferRef> unused;
  for (std::size_t i = 0; i < 4; ++i) blocks_[i].collect("block" + std::to_string(i), params, unused);
  if (config_.flags.cfc) {
    if (config_.constell1) constells_[0].collect("constell1", params, unused);
    if (config_.constell2) constells_[1].collect("constell2", params, unused);
  }
  params.push_back({"projection", projection_, true});
  params.push_back({"classifier", classifier_, true});
  params.push_back({"temperature", temperature_, false});
  return params;
}

std::vector<BufferRef> Network::buffers() {
  std::vector<ParamRef> unused;
  std::vector<BufferRef> buffers;
  for (std::size_t i = 0; i < 4; ++i) blocks_[i].collect("block" + std::to_string(i), unused, buffers);
  if (config_.flags.cfc) {
    if (config_.constell1) constells_[0].collect("constell1", unused, buffers);
    if (config_.constell2) constells_[1].collect("constell2", unused, buffers);
  }
  return buffers;
}

std::vector<std::pair<std::string, CentroidBank*>> Network::banks() {
  std::vector<std::pair<std::string, CentroidBank*>> out;
  if (!config_.flags.cfc) return out;
  if (config_.stem1_lafcm) out.emplace_back("stem1.bank", &stem_banks_[0]);
  if (config_.stem2_lafcm) out.emplace_back("stem2.bank", &stem_banks_[1]);
  if (config_.constell1) out.emplace_back("constell1.bank", &constells_[0].bank);
  if (config_.constell2) out.emplace_back("constell2.bank", &constells_[1].bank);
  return out;
}

void Network::save(const std::string& path, const std::string& config_json) {
  checkpoint::Contents contents;
  contents.config_json = config_json;
  for (const ParamRef& p : parameters()) {
    contents.arrays.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  for (const BufferRef& b : buffers()) {
    contents.arrays.push_back({b.name, {b.values->size()}, *b.values});
  }
  for (auto& [name, bank] : banks()) {
    if (!bank->initialized()) continue;
    const Tensor& c = bank->centroids();
    contents.arrays.push_back({name + ".centroids", c.shape(), {c.data().begin(), c.data().end()}});
  }
  checkpoint::write(path, contents);
}

void Network::load(const std::string& path) {
  const checkpoint::Contents contents = checkpoint::read(path);
  auto fetch = [&](const std::string& name, const Shape& shape) -> const checkpoint::NamedArray& {
    const checkpoint::NamedArray* a = contents.find(name);
    if (!a) throw IoError("checkpoint " + path + " has no array '" + name + "'");
    if (a->shape != shape) {
      throw IoError("checkpoint array '" + name + "' is " + shape_str(a->shape) + ", expected " +
                    shape_str(shape));
    }
    return *a;
  };
  for (ParamRef& p : parameters()) {
    const auto& a = fetch(p.name, p.tensor.shape());
    std::copy(a.values.begin(), a.values.end(), p.tensor.mutable_data().begin());
  }
  for (BufferRef& b : buffers()) {
    *b.values = fetch(b.name, {b.values->size()}).values;
  }
  for (auto& [name, bank] : banks()) {
    const Shape shape{bank->clusters(), bank->channels()};
    if (!contents.find(name + ".centroids")) continue;
    bank->load(Tensor(shape, fetch(name + ".centroids", shape).values));
  }
}

}  // namespace lcn4
