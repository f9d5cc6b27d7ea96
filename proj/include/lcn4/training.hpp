#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "lcn4/backbone.hpp"
#include "lcn4/dataset.hpp"
#include "lcn4/layers.hpp"
#include "lcn4/metrics.hpp"
#include "lcn4/tensor.hpp"

namespace lcn4 {

// Mean cross-entropy of features . classifier against base-class labels.
Tensor classification_loss(const Tensor& features, const Tensor& classifier,
                           std::span<const std::size_t> labels);

// Prototype loss: temperature-scaled cosine logits of queries against class
// mean support embeddings, mean cross-entropy over queries.
Tensor meta_loss(const Tensor& support, std::span<const std::size_t> support_labels,
                 const Tensor& query, std::span<const std::size_t> query_labels, std::size_t way,
                 const Tensor& temperature);

struct LrSchedule {
  // (epoch_bound, lr): the first pair whose bound exceeds the epoch applies;
  // past the last bound its lr is kept.
  std::vector<std::pair<std::size_t, double>> steps{{20, 0.1}, {40, 0.06}, {60, 0.012}};
  double at(std::size_t epoch) const;
};

// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
class Sgd {
 public:
  Sgd(std::vector<ParamRef> params, double momentum, double weight_decay);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t episodes_per_epoch = 1000;
  // Classification mini-batches per epoch; 0 means one pass over the base split.
  std::size_t cls_steps_per_epoch = 0;
  std::size_t batch_size = 64;
  // Episodic steps taken after each classification step.
  std::size_t episodic_per_cls = 1;
  data::EpisodeSpec train_spec{5, 1, 15};
  data::EpisodeSpec val_spec{5, 1, 15};
  std::size_t val_episodes = 100;
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Metric metric = Metric::cosine;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double cls_loss = 0.0;   // mean over the epoch's classification steps
  double meta_loss = 0.0;  // mean over the epoch's episodic steps
  double val_accuracy = 0.0;  // percent; NaN without a val split
  double lr = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Alternating classification / episodic training. Throws NumericError on a
// non-finite loss, naming the step.
std::vector<EpochMetrics> train(Network& network, const data::DatasetSplits& splits,
                                const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace lcn4
