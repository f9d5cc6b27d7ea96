#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lcn4/backbone.hpp"
#include "lcn4/metrics.hpp"
#include "lcn4/synth.hpp"
#include "lcn4/training.hpp"

namespace lcn4 {

// Flat run configuration. Defaults come from a profile, a JSON file
// overrides them and command-line flags override the file.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string dataset = "synthetic";  // "synthetic" or a class-per-directory root
  std::string splits_file;

  // network
  std::array<std::size_t, 4> channels{64, 64, 64, 64};
  std::size_t resolution = 84;
  std::size_t clusters = 64;
  std::size_t heads = 8;
  std::size_t fourier_count = 64;
  double amplitude = 1.0;
  bool nfc = true, cfc = true, fdc = true;
  bool stem1_lafcm = true, stem2_lafcm = true;
  bool constell1 = true, constell2 = true;
  bool head_width_scaling = true;
  double centroid_momentum = 0.999;
  double centroid_temperature = 1.0;

  // training
  std::size_t epochs = 60;
  std::size_t episodes_per_epoch = 1000;
  std::size_t batch_size = 64;
  std::size_t cls_steps_per_epoch = 0;
  std::size_t episodic_per_cls = 1;
  std::size_t train_way = 5, train_shot = 1, train_query = 15;
  std::size_t val_episodes = 100;
  std::vector<std::pair<std::size_t, double>> lr_schedule{{20, 0.1}, {40, 0.06}, {60, 0.012}};
  double momentum = 0.9;
  double weight_decay = 5e-4;

  // evaluation
  std::size_t way = 5, shot = 1, query = 15;
  std::size_t eval_episodes = 800;
  std::size_t eval_epochs = 10;
  std::string metric = "cosine";
  double alpha = 0.75, beta = 0.5, gamma = 0.25;
  std::string branches = "1111";  // Z1..Z4 on/off

  // synthetic data
  std::size_t synth_base = 12, synth_val = 4, synth_novel = 5;
  std::size_t synth_per_class = 40;
  std::size_t synth_groups = 2;
  double synth_noise = 0.15;
  double synth_glyph_contrast = 0.9;
  double synth_position_jitter = 8.0;
  std::size_t synth_distractors = 3;
  std::size_t synth_glyph_scale = 3;

  // Built-in profile defaults; throws ConfigError for an unknown name.
  static RunConfig for_profile(const std::string& name);

  // Throws ConfigError describing the first inconsistency.
  void validate() const;

  NetworkConfig network(std::size_t num_classes) const;
  TrainConfig training() const;
  EvalConfig evaluation() const;
  synth::SynthSpec synth_spec() const;
  std::array<bool, kBranches> branch_mask() const;
};

std::string to_json(const RunConfig& config);

// Applies a flat JSON object on top of `base`. Unknown keys and type
// mismatches throw ConfigError naming the key.
RunConfig apply_json(const RunConfig& base, const std::string& json_text);

// Reads the profile named in a config file ("profile" key), or "" if absent.
std::string profile_in(const std::string& json_text);

struct KeyHelp {
  std::string key;
  std::string default_value;
  std::string note;
};
// Every key with its default under `profile` and a provenance note.
std::vector<KeyHelp> describe_keys(const std::string& profile);

}  // namespace lcn4
