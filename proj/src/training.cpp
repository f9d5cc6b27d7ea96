#include "lcn4/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "lcn4/errors.hpp"
#include "lcn4/ops.hpp"

namespace lcn4 {

Tensor classification_loss(const Tensor& features, const Tensor& classifier,
                           std::span<const std::size_t> labels) {
  return cross_entropy(matmul(features, classifier), labels);
}

Tensor meta_loss(const Tensor& support, std::span<const std::size_t> support_labels,
                 const Tensor& query, std::span<const std::size_t> query_labels, std::size_t way,
                 const Tensor& temperature) {
  Tensor protos = class_prototypes(support, support_labels, way);
  Tensor logits = mul(cosine_similarity(query, protos), temperature);
  return cross_entropy(logits, query_labels);
}

double LrSchedule::at(std::size_t epoch) const {
  if (steps.empty()) throw ConfigError("empty learning-rate schedule");
  for (const auto& [bound, lr] : steps) {
    if (epoch < bound) return lr;
  }
  return steps.back().second;
}

Sgd::Sgd(std::vector<ParamRef> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const ParamRef& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0);
}

void Sgd::zero_grad() {
  for (ParamRef& p : params_) p.tensor.zero_grad();
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    const double wd = params_[i].decay ? weight_decay_ : 0.0;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j] + wd * w[j];
      w[j] -= lr * v[j];
    }
  }
}

namespace {

void check_finite(double loss, const char* kind, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << kind << " loss is " << loss << " at epoch " << epoch << ", step " << step;
    throw NumericError(msg.str());
  }
}

}  // namespace

std::vector<EpochMetrics> train(Network& network, const data::DatasetSplits& splits,
                                const TrainConfig& config, const TrainHooks& hooks) {
  if (splits.base.size() != network.config().num_classes) {
    throw ConfigError("classifier has " + std::to_string(network.config().num_classes) +
                      " outputs but the base split has " + std::to_string(splits.base.size()) +
                      " classes");
  }
  std::vector<std::pair<std::size_t, std::size_t>> base_items;
  std::vector<std::size_t> base_counts;
  for (std::size_t c = 0; c < splits.base.size(); ++c) {
    base_counts.push_back(splits.base[c].count);
    for (std::size_t i = 0; i < splits.base[c].count; ++i) base_items.emplace_back(c, i);
  }
  const std::size_t batch = std::min(config.batch_size, base_items.size());
  const std::size_t cls_steps = config.cls_steps_per_epoch
                                    ? config.cls_steps_per_epoch
                                    : (base_items.size() + batch - 1) / batch;

  std::mt19937_64 episode_rng(config.seed);
  std::mt19937_64 batch_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  Sgd optimizer(network.parameters(), config.momentum, config.weight_decay);
  NetworkEncoder encoder(network);
  std::vector<EpochMetrics> history;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule.at(epoch);
    std::shuffle(base_items.begin(), base_items.end(), batch_rng);
    std::size_t cursor = 0;
    std::size_t cls_left = cls_steps, epi_left = config.episodes_per_epoch, step = 0;
    double cls_sum = 0.0, meta_sum = 0.0;

    auto classification_step = [&] {
      if (cursor + batch > base_items.size()) {
        std::shuffle(base_items.begin(), base_items.end(), batch_rng);
        cursor = 0;
      }
      std::vector<std::pair<std::size_t, std::size_t>> items(
          base_items.begin() + static_cast<long>(cursor),
          base_items.begin() + static_cast<long>(cursor + batch));
      cursor += batch;
      std::vector<std::size_t> labels;
      for (const auto& it : items) labels.push_back(it.first);
      optimizer.zero_grad();
      Taps taps = network.forward(data::gather(splits, data::Split::base, items), true);
      Tensor loss = classification_loss(taps.feat2, network.classifier(), labels);
      check_finite(loss.item(), "classification", epoch, step);
      loss.backward();
      optimizer.step(lr);
      cls_sum += loss.item();
    };

    auto episodic_step = [&] {
      const auto& spec = config.train_spec;
      const data::EpisodeDraw draw = data::draw_episode(base_counts, spec, episode_rng);
      std::vector<std::pair<std::size_t, std::size_t>> items;
      for (std::size_t j = 0; j < spec.way; ++j) {
        for (std::size_t i : draw.support[j]) items.emplace_back(draw.classes[j], i);
      }
      for (std::size_t j = 0; j < spec.way; ++j) {
        for (std::size_t i : draw.query[j]) items.emplace_back(draw.classes[j], i);
      }
      optimizer.zero_grad();
      Taps taps = network.forward(data::gather(splits, data::Split::base, items), true);
      const std::size_t ns = spec.way * spec.shot, nq = spec.way * spec.query;
      Tensor emb = taps.logit_embed1;
      Tensor loss = meta_loss(narrow(emb, 0, 0, ns), data::episode_labels(spec.way, spec.shot),
                              narrow(emb, 0, ns, nq), data::episode_labels(spec.way, spec.query),
                              spec.way, network.temperature());
      check_finite(loss.item(), "meta", epoch, step);
      loss.backward();
      optimizer.step(lr);
      meta_sum += loss.item();
    };

    while (cls_left > 0 || epi_left > 0) {
      if (cls_left > 0) {
        classification_step();
        --cls_left;
        ++step;
      }
      for (std::size_t r = 0; r < config.episodic_per_cls && epi_left > 0; ++r) {
        episodic_step();
        --epi_left;
        ++step;
      }
      if (config.episodic_per_cls == 0 && cls_left == 0) break;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.cls_loss = cls_steps ? cls_sum / static_cast<double>(cls_steps) : 0.0;
    m.meta_loss = config.episodes_per_epoch ? meta_sum / static_cast<double>(config.episodes_per_epoch) : 0.0;
    m.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (!splits.val.empty() && config.val_episodes > 0) {
      EvalConfig ec;
      ec.spec = config.val_spec;
      ec.spec.way = std::min(ec.spec.way, splits.val.size());
      ec.episodes_per_epoch = config.val_episodes;
      ec.epochs = 1;
      ec.metric = config.metric;
      ec.split = data::Split::val;
      ec.seed = config.seed + 1;
      m.val_accuracy = evaluate(encoder, splits, ec).mean_accuracy;
    }
    history.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  return history;
}

}  // namespace lcn4
