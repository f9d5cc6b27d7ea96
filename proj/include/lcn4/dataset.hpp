#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lcn4/tensor.hpp"

namespace lcn4::data {

enum class Split { base, val, novel };

std::string to_string(Split split);
// Throws ConfigError on anything but "base", "val" or "novel".
Split parse_split(const std::string& text);

struct ClassImages {
  std::string name;
  std::size_t count = 0;
  std::vector<double> pixels;  // count x C x R x R
};

struct DatasetSplits {
  std::size_t channels = 3;
  std::size_t resolution = 84;
  std::vector<ClassImages> base, val, novel;
  // Per-channel statistics of the base split, already applied to all splits.
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  const std::vector<ClassImages>& split(Split s) const;
  std::vector<ClassImages>& split(Split s);
  std::size_t image_numel() const { return channels * resolution * resolution; }
  std::size_t total_classes() const { return base.size() + val.size() + novel.size(); }
};

// Reads "class_name<TAB>{base|val|novel}" lines. Blank lines and '#'
// comments are skipped; an empty listing is an IngestionError.
std::vector<std::pair<std::string, Split>> read_splits_file(const std::filesystem::path& path);

// One directory per class under `root`; every image is decoded, resized to
// resolution x resolution and normalised with base-split statistics.
DatasetSplits ingest_dataset(const std::filesystem::path& root,
                             const std::filesystem::path& splits_file, std::size_t resolution);

// Computes per-channel mean/std over the base split and standardises every
// split with them.
void normalize_with_base_statistics(DatasetSplits& splits);

struct EpisodeSpec {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t query = 15;
};

// Split-local indices of one episode, class-major in draw order.
struct EpisodeDraw {
  std::vector<std::size_t> classes;
  std::vector<std::vector<std::size_t>> support;  // [way][shot] instance ids
  std::vector<std::vector<std::size_t>> query;    // [way][query]
};

struct Episode {
  Tensor support;  // [way*shot x C x R x R]
  Tensor query;    // [way*query x C x R x R]
  std::vector<std::size_t> support_labels;
  std::vector<std::size_t> query_labels;
  EpisodeDraw draw;
};

// Uniform without replacement at class and instance level. Episode labels
// are 0..way-1 in class-draw order.
EpisodeDraw draw_episode(const std::vector<std::size_t>& instances_per_class,
                         const EpisodeSpec& spec, std::mt19937_64& rng);
Episode sample_episode(const DatasetSplits& splits, Split split, const EpisodeSpec& spec,
                       std::mt19937_64& rng);

// Stacks (class, instance) images of one split into [n x C x R x R].
Tensor gather(const DatasetSplits& splits, Split split,
              const std::vector<std::pair<std::size_t, std::size_t>>& items);

// Labels 0..way-1 repeated `per_class` times, class-major.
std::vector<std::size_t> episode_labels(std::size_t way, std::size_t per_class);

}  // namespace lcn4::data
