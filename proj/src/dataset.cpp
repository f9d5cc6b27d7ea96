#include "lcn4/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "lcn4/errors.hpp"
#include "lcn4/image_io.hpp"

namespace lcn4::data {

std::string to_string(Split split) {
  switch (split) {
    case Split::base: return "base";
    case Split::val: return "val";
    case Split::novel: return "novel";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "base") return Split::base;
  if (text == "val") return Split::val;
  if (text == "novel") return Split::novel;
  throw ConfigError("unknown split '" + text + "' (expected base, val or novel)");
}

const std::vector<ClassImages>& DatasetSplits::split(Split s) const {
  switch (s) {
    case Split::base: return base;
    case Split::val: return val;
    case Split::novel: return novel;
  }
  return base;
}

std::vector<ClassImages>& DatasetSplits::split(Split s) {
  return const_cast<std::vector<ClassImages>&>(std::as_const(*this).split(s));
}

std::vector<std::pair<std::string, Split>> read_splits_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read splits file " + path.string());
  std::vector<std::pair<std::string, Split>> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) +
                           ": expected 'class<TAB>split'");
    }
    const std::string name = line.substr(0, tab);
    Split split;
    try {
      split = parse_split(line.substr(tab + 1));
    } catch (const ConfigError& e) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(name).second) {
      throw IngestionError("class '" + name + "' is listed twice in " + path.string());
    }
    entries.emplace_back(name, split);
  }
  if (entries.empty()) throw IngestionError("splits file " + path.string() + " lists no classes");
  return entries;
}

DatasetSplits ingest_dataset(const std::filesystem::path& root,
                             const std::filesystem::path& splits_file, std::size_t resolution) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IngestionError("dataset root " + root.string() + " is not a directory");
  const auto entries = read_splits_file(splits_file);

  std::set<std::string> listed;
  for (const auto& [name, split] : entries) listed.insert(name);
  for (const auto& dir : fs::directory_iterator(root)) {
    if (dir.is_directory() && !listed.count(dir.path().filename().string())) {
      throw IngestionError("class directory '" + dir.path().filename().string() +
                           "' is not assigned to any split");
    }
  }

  DatasetSplits splits;
  splits.resolution = resolution;
  const std::size_t per_image = splits.image_numel();
  for (const auto& [name, split] : entries) {
    const fs::path dir = root / name;
    if (!fs::is_directory(dir)) throw IngestionError("missing class directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir)) {
      if (f.is_regular_file()) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IngestionError("class directory " + dir.string() + " has no images");
    ClassImages cls;
    cls.name = name;
    cls.count = files.size();
    cls.pixels.reserve(files.size() * per_image);
    for (const auto& f : files) {
      const image::Image img = image::resize_bilinear(image::load(f), resolution, resolution);
      cls.pixels.insert(cls.pixels.end(), img.pixels.begin(), img.pixels.end());
    }
    splits.split(split).push_back(std::move(cls));
  }
  if (splits.base.empty()) throw IngestionError("splits file assigns no class to base");
  normalize_with_base_statistics(splits);
  return splits;
}

void normalize_with_base_statistics(DatasetSplits& splits) {
  const std::size_t plane = splits.resolution * splits.resolution;
  std::array<double, 3> sum{}, sumsq{};
  std::size_t count = 0;
  for (const ClassImages& cls : splits.base) {
    for (std::size_t i = 0; i < cls.count; ++i) {
      for (std::size_t c = 0; c < splits.channels; ++c) {
        const double* p = cls.pixels.data() + (i * splits.channels + c) * plane;
        for (std::size_t q = 0; q < plane; ++q) {
          sum[c] += p[q];
          sumsq[c] += p[q] * p[q];
        }
      }
      count += plane;
    }
  }
  if (count == 0) throw IngestionError("base split is empty; cannot compute normalisation");
  for (std::size_t c = 0; c < splits.channels; ++c) {
    const double mu = sum[c] / static_cast<double>(count);
    const double var = std::max(0.0, sumsq[c] / static_cast<double>(count) - mu * mu);
    splits.mean[c] = mu;
    splits.stddev[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  for (Split s : {Split::base, Split::val, Split::novel}) {
    for (ClassImages& cls : splits.split(s)) {
      for (std::size_t i = 0; i < cls.count; ++i) {
        for (std::size_t c = 0; c < splits.channels; ++c) {
          double* p = cls.pixels.data() + (i * splits.channels + c) * plane;
          for (std::size_t q = 0; q < plane; ++q) p[q] = (p[q] - splits.mean[c]) / splits.stddev[c];
        }
      }
    }
  }
}

namespace {

// First `take` entries of a uniformly shuffled 0..n-1.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t take,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace

EpisodeDraw draw_episode(const std::vector<std::size_t>& instances_per_class,
                         const EpisodeSpec& spec, std::mt19937_64& rng) {
  if (spec.way == 0 || spec.shot == 0 || spec.query == 0) {
    throw SamplingError("episode way, shot and query must all be positive");
  }
  const std::size_t per_class = spec.shot + spec.query;
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < instances_per_class.size(); ++c) {
    if (instances_per_class[c] >= per_class) eligible.push_back(c);
  }
  if (instances_per_class.size() < spec.way) {
    throw SamplingError("split has " + std::to_string(instances_per_class.size()) +
                        " classes, episode needs " + std::to_string(spec.way));
  }
  if (eligible.size() != instances_per_class.size()) {
    throw SamplingError("some classes have fewer than shot+query=" + std::to_string(per_class) +
                        " instances");
  }
  EpisodeDraw draw;
  draw.classes = sample_without_replacement(instances_per_class.size(), spec.way, rng);
  for (std::size_t c : draw.classes) {
    auto picks = sample_without_replacement(instances_per_class[c], per_class, rng);
    draw.support.emplace_back(picks.begin(), picks.begin() + static_cast<long>(spec.shot));
    draw.query.emplace_back(picks.begin() + static_cast<long>(spec.shot), picks.end());
  }
  return draw;
}

Tensor gather(const DatasetSplits& splits, Split split,
              const std::vector<std::pair<std::size_t, std::size_t>>& items) {
  const auto& classes = splits.split(split);
  const std::size_t per_image = splits.image_numel();
  std::vector<double> data(items.size() * per_image);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto [c, inst] = items[i];
    if (c >= classes.size() || inst >= classes[c].count) {
      throw SamplingError("image index out of range for split " + to_string(split));
    }
    std::copy_n(classes[c].pixels.begin() + static_cast<long>(inst * per_image), per_image,
                data.begin() + static_cast<long>(i * per_image));
  }
  return Tensor({items.size(), splits.channels, splits.resolution, splits.resolution},
                std::move(data));
}

std::vector<std::size_t> episode_labels(std::size_t way, std::size_t per_class) {
  std::vector<std::size_t> labels;
  labels.reserve(way * per_class);
  for (std::size_t c = 0; c < way; ++c) labels.insert(labels.end(), per_class, c);
  return labels;
}

Episode sample_episode(const DatasetSplits& splits, Split split, const EpisodeSpec& spec,
                       std::mt19937_64& rng) {
  const auto& classes = splits.split(split);
  std::vector<std::size_t> counts;
  for (const auto& c : classes) counts.push_back(c.count);
  Episode ep;
  ep.draw = draw_episode(counts, spec, rng);
  std::vector<std::pair<std::size_t, std::size_t>> sup, qry;
  for (std::size_t j = 0; j < spec.way; ++j) {
    for (std::size_t i : ep.draw.support[j]) sup.emplace_back(ep.draw.classes[j], i);
    for (std::size_t i : ep.draw.query[j]) qry.emplace_back(ep.draw.classes[j], i);
  }
  ep.support = gather(splits, split, sup);
  ep.query = gather(splits, split, qry);
  ep.support_labels = episode_labels(spec.way, spec.shot);
  ep.query_labels = episode_labels(spec.way, spec.query);
  return ep;
}

}  // namespace lcn4::data
