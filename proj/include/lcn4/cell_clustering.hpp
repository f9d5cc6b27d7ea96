#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "lcn4/tensor.hpp"

namespace lcn4 {

/// Persistent k-means centroids over cell features.
///
/// Centroids are statistics, not parameters: they never receive gradients.
/// In train mode the first batch seeds them (k distinct cells drawn without
/// replacement) and later batches blend in soft-assignment means with an
/// exponential moving average. In eval mode the bank is read-only.
class CentroidBank {
 public:
  CentroidBank() = default;
  CentroidBank(std::size_t clusters, std::size_t channels, double momentum = 0.999,
               double temperature = 1.0, std::uint64_t seed = 0);

  std::size_t clusters() const { return clusters_; }
  std::size_t channels() const { return channels_; }
  double momentum() const { return momentum_; }
  double temperature() const { return temperature_; }
  bool initialized() const { return initialized_; }
  bool training() const { return training_; }
  void set_training(bool flag) { training_ = flag; }

  // [k x C]; never requires a gradient.
  const Tensor& centroids() const { return centroids_; }
  // Overwrites the centroids (checkpoint restore, tests) and marks the bank
  // initialised.
  void load(const Tensor& centroids);

  // Seeds centroids with k distinct rows of `cells` ([n x C]).
  void initialize_from(const Tensor& cells);
  // One EMA soft k-means step on [n x C] cells.
  void update_from(const Tensor& cells);
  // Same step with the [n x k] distances to the current centroids supplied.
  void update_from(const Tensor& cells, std::span<const double> distances);

 private:
  std::size_t clusters_ = 0;
  std::size_t channels_ = 0;
  double momentum_ = 0.999;
  double temperature_ = 1.0;
  bool initialized_ = false;
  bool training_ = true;
  Tensor centroids_;
  std::mt19937_64 rng_;
};

/// Per-cell distances D̂ [B x H x W x k] from features U [B x H x W x C] to the
/// bank's centroids. Differentiable w.r.t. U only. An uninitialised bank is
/// seeded from U in train mode and rejected in eval mode.
Tensor cluster_distances(const Tensor& features, CentroidBank& bank);

// Views of a distance map: flat [n x k] and token-major [B x HW x k].
Tensor distances_flat(const Tensor& distance_map);
Tensor distances_tokens(const Tensor& distance_map);

/// EMA centroid maintenance for a batch of features (train mode only).
void update_centroids(const Tensor& features, CentroidBank& bank);
// As above, reusing a distance map already computed against the current
// centroids.
void update_centroids(const Tensor& features, CentroidBank& bank, const Tensor& distance_map);

// Sum over cells of squared distance to the nearest centroid.
double kmeans_inertia(const Tensor& features, const CentroidBank& bank);

}  // namespace lcn4
