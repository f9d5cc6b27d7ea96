#include "lcn4/cell_clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "lcn4/errors.hpp"
#include "lcn4/kernels.hpp"
#include "lcn4/ops.hpp"

namespace lcn4 {

namespace {

constexpr double kEmptyClusterWeight = 1e-8;

Tensor as_cells(const Tensor& features, std::size_t channels) {
  if (features.rank() != 4) {
    throw DimensionError("cell features must be [B x H x W x C], got " +
                         shape_str(features.shape()));
  }
  if (features.dim(3) != channels) {
    throw DimensionError("cell features have " + std::to_string(features.dim(3)) +
                         " channels, centroid bank expects " + std::to_string(channels));
  }
  return features;
}

}  // namespace

CentroidBank::CentroidBank(std::size_t clusters, std::size_t channels, double momentum,
                           double temperature, std::uint64_t seed)
    : clusters_(clusters),
      channels_(channels),
      momentum_(momentum),
      temperature_(temperature),
      centroids_(Tensor::zeros({clusters, channels})),
      rng_(seed) {
  if (clusters == 0 || channels == 0) throw PreconditionError("centroid bank needs k, C > 0");
  if (momentum < 0.0 || momentum > 1.0) throw PreconditionError("momentum must lie in [0, 1]");
  if (temperature <= 0.0) throw PreconditionError("soft-assignment temperature must be > 0");
}

void CentroidBank::load(const Tensor& centroids) {
  if (centroids.shape() != Shape{clusters_, channels_}) {
    throw DimensionError("centroid load: expected " + shape_str({clusters_, channels_}) +
                         ", got " + shape_str(centroids.shape()));
  }
  centroids_ = centroids.detach();
  initialized_ = true;
}

void CentroidBank::initialize_from(const Tensor& cells) {
  const std::size_t n = cells.dim(0);
  if (cells.dim(1) != channels_) throw DimensionError("centroid init: channel mismatch");
  if (n < clusters_) {
    throw PreconditionError("centroid init needs at least k=" + std::to_string(clusters_) +
                            " cells, batch has " + std::to_string(n));
  }
  // Partial Fisher-Yates: the first k entries become a uniform sample
  // without replacement.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < clusters_; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng_)]);
  }
  const auto src = cells.data();
  auto dst = centroids_.mutable_data();
  for (std::size_t j = 0; j < clusters_; ++j) {
    std::copy_n(src.begin() + static_cast<long>(order[j] * channels_), channels_,
                dst.begin() + static_cast<long>(j * channels_));
  }
  initialized_ = true;
}

void CentroidBank::update_from(const Tensor& cells) {
  const std::size_t n = cells.dim(0);
  std::vector<double> dist(n * clusters_);
  kernels::pairwise_euclidean(n, clusters_, channels_, cells.data().data(),
                              centroids_.data().data(), dist.data());
  update_from(cells, dist);
}

void CentroidBank::update_from(const Tensor& cells, std::span<const double> dist) {
  const std::size_t n = cells.dim(0);
  const std::size_t k = clusters_, d = channels_;
  if (dist.size() != n * k) throw DimensionError("centroid update: distance count mismatch");
  const double* u = cells.data().data();

  std::vector<double> logits(n * k);
  for (std::size_t i = 0; i < n * k; ++i) logits[i] = -dist[i] / temperature_;
  std::vector<double> assign(n * k);
  kernels::softmax_axis(n, k, 1, logits.data(), assign.data());

  std::vector<double> weight(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) weight[j] += assign[i * k + j];
  }
  std::vector<double> weighted(k * d, 0.0);
  kernels::gemm_tn(k, d, n, assign.data(), k, u, d, weighted.data(), d);

  auto c = centroids_.mutable_data();
  for (std::size_t j = 0; j < k; ++j) {
    if (weight[j] < kEmptyClusterWeight) continue;
    for (std::size_t p = 0; p < d; ++p) {
      const double target = weighted[j * d + p] / weight[j];
      c[j * d + p] = momentum_ * c[j * d + p] + (1.0 - momentum_) * target;
    }
  }
}

Tensor cluster_distances(const Tensor& features, CentroidBank& bank) {
  as_cells(features, bank.channels());
  const auto& s = features.shape();
  const std::size_t n = s[0] * s[1] * s[2];
  if (!bank.initialized()) {
    if (!bank.training()) {
      throw StateError("centroid bank is not initialised and cannot be seeded in eval mode");
    }
    NoGradGuard no_grad;
    bank.initialize_from(reshape(features.detach(), {n, s[3]}));
  }
  Tensor flat = reshape(features, {n, s[3]});
  Tensor dist = euclidean_distances(flat, bank.centroids());
  return reshape(dist, {s[0], s[1], s[2], bank.clusters()});
}

Tensor distances_flat(const Tensor& distance_map) {
  const auto& s = distance_map.shape();
  return reshape(distance_map, {s[0] * s[1] * s[2], s[3]});
}

Tensor distances_tokens(const Tensor& distance_map) {
  const auto& s = distance_map.shape();
  return reshape(distance_map, {s[0], s[1] * s[2], s[3]});
}

void update_centroids(const Tensor& features, CentroidBank& bank) {
  if (!bank.training()) throw StateError("update_centroids requires train mode");
  as_cells(features, bank.channels());
  const auto& s = features.shape();
  const std::size_t n = s[0] * s[1] * s[2];
  NoGradGuard no_grad;
  Tensor cells = reshape(features.detach(), {n, s[3]});
  if (!bank.initialized()) {
    bank.initialize_from(cells);
    return;
  }
  bank.update_from(cells);
}

void update_centroids(const Tensor& features, CentroidBank& bank, const Tensor& distance_map) {
  if (!bank.training()) throw StateError("update_centroids requires train mode");
  as_cells(features, bank.channels());
  const auto& s = features.shape();
  if (!bank.initialized() || distance_map.shape() != Shape{s[0], s[1], s[2], bank.clusters()}) {
    update_centroids(features, bank);
    return;
  }
  NoGradGuard no_grad;
  bank.update_from(reshape(features.detach(), {s[0] * s[1] * s[2], s[3]}), distance_map.data());
}

double kmeans_inertia(const Tensor& features, const CentroidBank& bank) {
  if (!bank.initialized()) throw StateError("kmeans_inertia needs an initialised bank");
  as_cells(features, bank.channels());
  const auto& s = features.shape();
  const std::size_t n = s[0] * s[1] * s[2];
  const std::size_t k = bank.clusters();
  std::vector<double> dist(n * k);
  kernels::pairwise_euclidean(n, k, bank.channels(), features.data().data(),
                              bank.centroids().data().data(), dist.data());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double nearest = *std::min_element(dist.begin() + static_cast<long>(i * k),
                                             dist.begin() + static_cast<long>((i + 1) * k));
    total += nearest * nearest;
  }
  return total;
}

}  // namespace lcn4
