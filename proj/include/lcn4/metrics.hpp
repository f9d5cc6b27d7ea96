#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lcn4/backbone.hpp"
#include "lcn4/dataset.hpp"
#include "lcn4/tensor.hpp"

namespace lcn4 {

enum class Metric { cosine, bray_curtis };

std::string to_string(Metric metric);
// Accepts "cosine", "bcd" and "bray-curtis".
Metric parse_metric(const std::string& text);

// sum|a-b| / sum|a+b|; a zero denominator gives 0.
double bray_curtis(std::span<const double> a, std::span<const double> b);

// Mean row of `support` per episode label: [way x d].
Tensor class_prototypes(const Tensor& support, std::span<const std::size_t> labels,
                        std::size_t way);

// [Q x way] similarities of every query row to every prototype; larger is
// more similar under both metrics (Bray-Curtis is reported as 1 - BCD).
Tensor branch_similarity(const Tensor& support, std::span<const std::size_t> labels,
                         std::size_t way, const Tensor& query, Metric metric);

inline constexpr std::size_t kBranches = 4;

struct SimilarityBundle {
  std::array<Tensor, kBranches> z;  // Z1..Z4, each [Q x way]
  double alpha = 0.75;
  double beta = 0.5;
  double gamma = 0.25;
  // Disabled branches contribute nothing (they may be left undefined).
  std::array<bool, kBranches> enabled{true, true, true, true};
};

// Z = Z1 + a Z2 + b Z3 + g Z4, accumulated left to right.
Tensor fuse(const SimilarityBundle& bundle);
// Row-wise argmax of the fused matrix; ties go to the lowest class index.
std::vector<std::size_t> fuse_and_predict(const SimilarityBundle& bundle);

// Per-image features for the four branches of one split, in class-major
// order (class c, instance i at row first_row(c) + i).
struct SplitEmbeddings {
  std::array<Tensor, kBranches> branch;
  std::vector<std::size_t> offsets;  // first row of each class
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual SplitEmbeddings embed(const data::DatasetSplits& splits, data::Split split) = 0;
};

// Eval-mode network taps: Z1 <- logit_embed1, Z2 <- logit_embed2,
// Z3 <- feat1, Z4 <- feat2.
class NetworkEncoder : public Encoder {
 public:
  explicit NetworkEncoder(Network& network, std::size_t chunk = 50) : net_(network), chunk_(chunk) {}
  SplitEmbeddings embed(const data::DatasetSplits& splits, data::Split split) override;

 private:
  Network& net_;
  std::size_t chunk_;
};

// One-hot of the split-local class id on every branch.
class OracleEncoder : public Encoder {
 public:
  SplitEmbeddings embed(const data::DatasetSplits& splits, data::Split split) override;
};

// Independent Gaussian features per image, ignoring content.
class RandomEncoder : public Encoder {
 public:
  explicit RandomEncoder(std::uint64_t seed, std::size_t dim = 16) : seed_(seed), dim_(dim) {}
  SplitEmbeddings embed(const data::DatasetSplits& splits, data::Split split) override;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

struct EvalConfig {
  data::EpisodeSpec spec;
  std::size_t episodes_per_epoch = 800;
  std::size_t epochs = 10;
  Metric metric = Metric::cosine;
  double alpha = 0.75, beta = 0.5, gamma = 0.25;
  std::array<bool, kBranches> branches{true, true, true, true};
  data::Split split = data::Split::novel;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double mean_accuracy = 0.0;  // percent
  double ci95 = 0.0;           // percent, 1.96 * population std / sqrt(n)
  std::vector<double> episode_accuracy;  // fractions
  std::vector<std::vector<double>> confusion;  // [way x way], rows normalised
  data::EpisodeSpec spec;
  Metric metric = Metric::cosine;

  // "84.43±0.20"
  std::string summary() const;
  void write_csv(const std::filesystem::path& path) const;
  void write_confusion_pgm(const std::filesystem::path& path, std::size_t cell = 16) const;
};

// Mean and 95% half-width (both as fractions) of per-episode accuracies.
std::pair<double, double> mean_ci95(std::span<const double> values);

// Every image of the split is embedded once (eval mode is a pure function of
// the image), then episodes are drawn and scored from the cached rows.
EvalReport evaluate(Encoder& encoder, const data::DatasetSplits& splits, const EvalConfig& config);

// Scores a single episode given cached embeddings; returns predictions.
std::vector<std::size_t> predict_episode(const SplitEmbeddings& emb, const data::EpisodeDraw& draw,
                                         const EvalConfig& config);

}  // namespace lcn4
