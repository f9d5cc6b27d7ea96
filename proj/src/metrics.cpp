#include "lcn4/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "lcn4/errors.hpp"
#include "lcn4/image_io.hpp"
#include "lcn4/ops.hpp"

namespace lcn4 {

std::string to_string(Metric metric) { return metric == Metric::cosine ? "cosine" : "bcd"; }

Metric parse_metric(const std::string& text) {
  if (text == "cosine") return Metric::cosine;
  if (text == "bcd" || text == "bray-curtis" || text == "bray_curtis") return Metric::bray_curtis;
  throw ConfigError("unknown metric '" + text + "' (expected cosine or bcd)");
}

double bray_curtis(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("bray_curtis: vectors differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::abs(a[i] - b[i]);
    den += std::abs(a[i] + b[i]);
  }
  return den == 0.0 ? 0.0 : num / den;
}

Tensor class_prototypes(const Tensor& support, std::span<const std::size_t> labels,
                        std::size_t way) {
  if (support.rank() != 2 || support.dim(0) != labels.size()) {
    throw DimensionError("prototypes: support " + shape_str(support.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<double> counts(way, 0.0);
  for (std::size_t y : labels) {
    if (y >= way) throw PreconditionError("prototypes: label out of range");
    counts[y] += 1.0;
  }
  std::vector<double> avg(way * labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) avg[labels[i] * labels.size() + i] = 1.0 / counts[labels[i]];
  for (std::size_t c = 0; c < way; ++c) {
    if (counts[c] == 0.0) throw PreconditionError("prototypes: class " + std::to_string(c) + " has no support");
  }
  return matmul(Tensor({way, labels.size()}, std::move(avg)), support);
}

Tensor branch_similarity(const Tensor& support, std::span<const std::size_t> labels,
                         std::size_t way, const Tensor& query, Metric metric) {
  Tensor protos = class_prototypes(support, labels, way);
  if (metric == Metric::cosine) return cosine_similarity(query, protos);
  const std::size_t q = query.dim(0), d = query.dim(1);
  if (protos.dim(1) != d) throw DimensionError("branch_similarity: feature widths differ");
  std::vector<double> out(q * way);
  const auto qd = query.data();
  const auto pd = protos.data();
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < way; ++j) {
      out[i * way + j] = 1.0 - bray_curtis(qd.subspan(i * d, d), pd.subspan(j * d, d));
    }
  }
  return Tensor({q, way}, std::move(out));
}

Tensor fuse(const SimilarityBundle& bundle) {
  const std::array<double, kBranches> w{1.0, bundle.alpha, bundle.beta, bundle.gamma};
  Shape shape;
  for (std::size_t b = 0; b < kBranches; ++b) {
    if (!bundle.enabled[b]) continue;
    if (shape.empty()) shape = bundle.z[b].shape();
    if (bundle.z[b].shape() != shape || shape.size() != 2) {
      throw DimensionError("similarity branches must share one [Q x K] shape");
    }
  }
  if (shape.empty()) throw PreconditionError("fuse: no similarity branch enabled");
  std::vector<double> z(shape_numel(shape), 0.0);
  for (std::size_t b = 0; b < kBranches; ++b) {
    if (!bundle.enabled[b]) continue;
    const auto src = bundle.z[b].data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += w[b] * src[i];
  }
  return Tensor(shape, std::move(z));
}

std::vector<std::size_t> fuse_and_predict(const SimilarityBundle& bundle) {
  const Tensor z = fuse(bundle);
  const std::size_t q = z.dim(0), k = z.dim(1);
  const auto v = z.data();
  std::vector<std::size_t> pred(q);
  for (std::size_t i = 0; i < q; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (v[i * k + j] > v[i * k + best]) best = j;
    }
    pred[i] = best;
  }
  return pred;
}

namespace {

std::vector<std::size_t> class_offsets(const std::vector<data::ClassImages>& classes) {
  std::vector<std::size_t> offsets;
  std::size_t row = 0;
  for (const auto& c : classes) {
    offsets.push_back(row);
    row += c.count;
  }
  offsets.push_back(row);
  return offsets;
}

Tensor rows_of(const Tensor& table, const std::vector<std::size_t>& rows) {
  const std::size_t d = table.dim(1);
  std::vector<double> out(rows.size() * d);
  const auto src = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + static_cast<long>(rows[i] * d), d, out.begin() + static_cast<long>(i * d));
  }
  return Tensor({rows.size(), d}, std::move(out));
}

}  // namespace

SplitEmbeddings NetworkEncoder::embed(const data::DatasetSplits& splits, data::Split split) {
  NoGradGuard no_grad;
  const auto& classes = splits.split(split);
  SplitEmbeddings out;
  out.offsets = class_offsets(classes);
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t i = 0; i < classes[c].count; ++i) all.emplace_back(c, i);
  }
  if (all.empty()) throw SamplingError("split " + data::to_string(split) + " has no images");
  std::array<std::vector<double>, kBranches> cols;
  std::array<std::size_t, kBranches> widths{};
  for (std::size_t start = 0; start < all.size(); start += chunk_) {
    const std::size_t end = std::min(all.size(), start + chunk_);
    std::vector<std::pair<std::size_t, std::size_t>> items(all.begin() + static_cast<long>(start),
                                                           all.begin() + static_cast<long>(end));
    Taps taps = net_.forward(data::gather(splits, split, items), false);
    const std::array<const Tensor*, kBranches> t{&taps.logit_embed1, &taps.logit_embed2, &taps.feat1, &taps.feat2};
    for (std::size_t b = 0; b < kBranches; ++b) {
      widths[b] = t[b]->dim(1);
      cols[b].insert(cols[b].end(), t[b]->data().begin(), t[b]->data().end());
    }
  }
  for (std::size_t b = 0; b < kBranches; ++b) {
    out.branch[b] = Tensor({all.size(), widths[b]}, std::move(cols[b]));
  }
  return out;
}

SplitEmbeddings OracleEncoder::embed(const data::DatasetSplits& splits, data::Split split) {
  const auto& classes = splits.split(split);
  SplitEmbeddings out;
  out.offsets = class_offsets(classes);
  const std::size_t n = out.offsets.back(), k = classes.size();
  std::vector<double> onehot(n * k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = out.offsets[c]; r < out.offsets[c + 1]; ++r) onehot[r * k + c] = 1.0;
  }
  for (auto& b : out.branch) b = Tensor({n, k}, onehot);
  return out;
}

SplitEmbeddings RandomEncoder::embed(const data::DatasetSplits& splits, data::Split split) {
  SplitEmbeddings out;
  out.offsets = class_offsets(splits.split(split));
  std::mt19937_64 rng(seed_);
  for (auto& b : out.branch) b = Tensor::randn({out.offsets.back(), dim_}, rng);
  return out;
}

std::vector<std::size_t> predict_episode(const SplitEmbeddings& emb, const data::EpisodeDraw& draw,
                                         const EvalConfig& config) {
  const std::size_t way = draw.classes.size();
  std::vector<std::size_t> sup_rows, qry_rows, sup_labels;
  for (std::size_t j = 0; j < way; ++j) {
    const std::size_t base = emb.offsets[draw.classes[j]];
    for (std::size_t i : draw.support[j]) {
      sup_rows.push_back(base + i);
      sup_labels.push_back(j);
    }
    for (std::size_t i : draw.query[j]) qry_rows.push_back(base + i);
  }
  SimilarityBundle bundle;
  bundle.alpha = config.alpha;
  bundle.beta = config.beta;
  bundle.gamma = config.gamma;
  bundle.enabled = config.branches;
  for (std::size_t b = 0; b < kBranches; ++b) {
    if (!config.branches[b]) continue;
    bundle.z[b] = branch_similarity(rows_of(emb.branch[b], sup_rows), sup_labels, way,
                                    rows_of(emb.branch[b], qry_rows), config.metric);
  }
  return fuse_and_predict(bundle);
}

std::pair<double, double> mean_ci95(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  return {mean, 1.96 * std::sqrt(var) / std::sqrt(n)};
}

EvalReport evaluate(Encoder& encoder, const data::DatasetSplits& splits, const EvalConfig& config) {
  const auto& classes = splits.split(config.split);
  std::vector<std::size_t> counts;
  for (const auto& c : classes) counts.push_back(c.count);
  const std::size_t way = config.spec.way;
  if (classes.size() < way) {
    throw SamplingError(data::to_string(config.split) + " split has " +
                        std::to_string(classes.size()) + " classes, " + std::to_string(way) +
                        "-way evaluation needs " + std::to_string(way));
  }
  const SplitEmbeddings emb = encoder.embed(splits, config.split);

  EvalReport report;
  report.spec = config.spec;
  report.metric = config.metric;
  std::vector<std::vector<double>> counts_matrix(way, std::vector<double>(way, 0.0));
  std::mt19937_64 rng(config.seed);
  const std::size_t total = config.episodes_per_epoch * config.epochs;
  for (std::size_t e = 0; e < total; ++e) {
    const data::EpisodeDraw draw = data::draw_episode(counts, config.spec, rng);
    const auto pred = predict_episode(emb, draw, config);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const std::size_t truth = i / config.spec.query;
      correct += pred[i] == truth;
      counts_matrix[truth][pred[i]] += 1.0;
    }
    report.episode_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(pred.size()));
  }
  const auto [mean, ci] = mean_ci95(report.episode_accuracy);
  report.mean_accuracy = 100.0 * mean;
  report.ci95 = 100.0 * ci;
  report.confusion = counts_matrix;
  for (auto& row : report.confusion) {
    double s = 0.0;
    for (double v : row) s += v;
    if (s > 0) {
      for (double& v : row) v /= s;
    }
  }
  return report;
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << mean_accuracy << "±" << ci95;
  return out.str();
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  out << "metric,value\n";
  out << "accuracy," << mean_accuracy << "\n";
  out << "ci95," << ci95 << "\n";
  out << "episodes," << episode_accuracy.size() << "\n";
  out << "way," << spec.way << "\nshot," << spec.shot << "\nquery," << spec.query << "\n";
  out << "similarity," << to_string(metric) << "\n";
  out << "\nconfusion\n";
  for (const auto& row : confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void EvalReport::write_confusion_pgm(const std::filesystem::path& path, std::size_t cell) const {
  const std::size_t k = confusion.size();
  if (k == 0) throw StateError("empty confusion matrix");
  const std::size_t side = k * cell;
  std::vector<std::uint8_t> pixels(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double v = std::clamp(confusion[y / cell][x / cell], 0.0, 1.0);
      pixels[y * side + x] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
  image::write_pgm(path, side, side, pixels);
}

}  // namespace lcn4
