#include "lcn4/config.hpp"

#include <json.hpp>
#include <map>

#include "lcn4/errors.hpp"

namespace lcn4 {

namespace {

using Json = nlohmann::ordered_json;

// One list drives serialisation, parsing and help so they cannot drift.
#define LCN4_CONFIG_FIELDS(X)                                                                  \
  X(profile, "desk or paper")                                                                  \
  X(seed, "global seed for weights, episodes and synthetic data")                              \
  X(dataset, "\"synthetic\" or a directory with one sub-directory per class")                  \
  X(splits_file, "tab-separated class/split listing for a directory dataset")                  \
  X(channels, "ConvNet-4 widths")                                                              \
  X(resolution, "input side in pixels")                                                        \
  X(clusters, "cell-feature cluster count k")                                                  \
  X(heads, "attention heads h")                                                                \
  X(fourier_count, "Fourier term count N of the frequency encoding")                           \
  X(amplitude, "frequency-encoding amplitude A")                                               \
  X(nfc, "nonsequential feature compensation")                                                 \
  X(cfc, "cell feature clustering")                                                            \
  X(fdc, "frequency distance compensation (needs cfc)")                                        \
  X(stem1_lafcm, "LAFCM after the first stem")                                                 \
  X(stem2_lafcm, "LAFCM after the second stem")                                                \
  X(constell1, "first constellation block")                                                    \
  X(constell2, "second constellation block")                                                   \
  X(head_width_scaling, "scale attention logits by 1/sqrt(k/h) instead of 1/sqrt(k)")          \
  X(centroid_momentum, "EMA momentum of the cluster centroids")                                \
  X(centroid_temperature, "soft-assignment temperature of the centroid update")                \
  X(epochs, "training epochs")                                                                 \
  X(episodes_per_epoch, "training episodes per epoch")                                         \
  X(batch_size, "classification mini-batch")                                                   \
  X(cls_steps_per_epoch, "classification steps per epoch, 0 = one pass over base")             \
  X(episodic_per_cls, "episodic steps after each classification step")                         \
  X(train_way, "training episode way")                                                         \
  X(train_shot, "training episode shot")                                                       \
  X(train_query, "training episode queries per class")                                         \
  X(val_episodes, "validation episodes after each epoch")                                      \
  X(lr_schedule, "[[epoch_bound, lr], ...]")                                                   \
  X(momentum, "SGD momentum")                                                                  \
  X(weight_decay, "L2 weight decay")                                                           \
  X(way, "evaluation way K")                                                                   \
  X(shot, "evaluation shot N")                                                                 \
  X(query, "evaluation queries per class")                                                     \
  X(eval_episodes, "evaluation episodes per epoch")                                            \
  X(eval_epochs, "evaluation epochs averaged")                                                 \
  X(metric, "cosine or bcd")                                                                   \
  X(alpha, "fusion weight of Z2")                                                              \
  X(beta, "fusion weight of Z3")                                                               \
  X(gamma, "fusion weight of Z4")                                                              \
  X(branches, "Z1..Z4 on/off as four 0/1 characters")                                          \
  X(synth_base, "synthetic base classes")                                                      \
  X(synth_val, "synthetic val classes")                                                        \
  X(synth_novel, "synthetic novel classes")                                                    \
  X(synth_per_class, "synthetic images per class")                                             \
  X(synth_groups, "synthetic coarse shape groups (1..4)")                                      \
  X(synth_noise, "synthetic pixel noise sigma")                                                \
  X(synth_glyph_contrast, "synthetic glyph contrast against its shape")                        \
  X(synth_position_jitter, "synthetic shape centre jitter in pixels")                          \
  X(synth_distractors, "synthetic glyph-sized distractor blobs per image")                     \
  X(synth_glyph_scale, "synthetic pixels per glyph cell at 84x84")

Json as_json(const RunConfig& c) {
  Json j;
#define X(name, note) j[#name] = c.name;
  LCN4_CONFIG_FIELDS(X)
#undef X
  return j;
}

std::map<std::string, std::string> notes() {
  std::map<std::string, std::string> m;
#define X(name, note) m[#name] = note;
  LCN4_CONFIG_FIELDS(X)
#undef X
  return m;
}

}  // namespace

RunConfig RunConfig::for_profile(const std::string& name) {
  RunConfig c;
  if (name == "paper") {
    c.profile = "paper";
    c.dataset = "";
    return c;
  }
  if (name != "desk") throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
  c.profile = "desk";
  c.channels = {8, 8, 8, 8};
  c.clusters = 16;
  c.heads = 4;
  c.fourier_count = 16;
  c.epochs = 10;
  c.episodes_per_epoch = 200;
  c.train_query = 3;
  c.val_episodes = 100;
  c.lr_schedule = {{5, 0.05}, {8, 0.01}, {10, 0.002}};
  c.eval_episodes = 200;
  c.eval_epochs = 1;
  return c;
}

void RunConfig::validate() const {
  if (profile != "desk" && profile != "paper") {
    throw ConfigError("profile: unknown profile '" + profile + "'");
  }
  if (dataset.empty()) throw ConfigError("dataset: no dataset path given for profile " + profile);
  if (dataset != "synthetic" && splits_file.empty()) {
    throw ConfigError("splits_file: required for a directory dataset");
  }
  parse_metric(metric);
  if (branches.size() != kBranches || branches.find_first_not_of("01") != std::string::npos) {
    throw ConfigError("branches: expected four 0/1 characters, got '" + branches + "'");
  }
  if (branches[0] != '1') throw ConfigError("branches: Z1 cannot be disabled");
  if (lr_schedule.empty()) throw ConfigError("lr_schedule: empty");
  if (way < 2 || shot == 0 || query == 0) throw ConfigError("way/shot/query: need way>=2, shot>=1, query>=1");
  if (train_way < 2 || train_shot == 0 || train_query == 0) {
    throw ConfigError("train_way/train_shot/train_query: need way>=2, shot>=1, query>=1");
  }
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  network(1).validate();
}

NetworkConfig RunConfig::network(std::size_t num_classes) const {
  NetworkConfig n;
  n.channels = channels;
  n.resolution = resolution;
  n.clusters = clusters;
  n.heads = heads;
  n.fourier_count = fourier_count;
  n.amplitude = amplitude;
  n.flags = {nfc, cfc, fdc};
  n.stem1_lafcm = stem1_lafcm;
  n.stem2_lafcm = stem2_lafcm;
  n.constell1 = constell1;
  n.constell2 = constell2;
  n.head_width_scaling = head_width_scaling;
  n.centroid_momentum = centroid_momentum;
  n.centroid_temperature = centroid_temperature;
  n.num_classes = num_classes;
  return n;
}

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.epochs = epochs;
  t.episodes_per_epoch = episodes_per_epoch;
  t.cls_steps_per_epoch = cls_steps_per_epoch;
  t.batch_size = batch_size;
  t.episodic_per_cls = episodic_per_cls;
  t.train_spec = {train_way, train_shot, train_query};
  t.val_spec = {way, shot, query};
  t.val_episodes = val_episodes;
  t.schedule.steps = lr_schedule;
  t.momentum = momentum;
  t.weight_decay = weight_decay;
  t.metric = parse_metric(metric);
  t.seed = seed;
  return t;
}

std::array<bool, kBranches> RunConfig::branch_mask() const {
  std::array<bool, kBranches> mask{};
  for (std::size_t i = 0; i < kBranches; ++i) mask[i] = branches.at(i) == '1';
  return mask;
}

EvalConfig RunConfig::evaluation() const {
  EvalConfig e;
  e.spec = {way, shot, query};
  e.episodes_per_epoch = eval_episodes;
  e.epochs = eval_epochs;
  e.metric = parse_metric(metric);
  e.alpha = alpha;
  e.beta = beta;
  e.gamma = gamma;
  e.branches = branch_mask();
  e.seed = seed + 2;
  return e;
}

synth::SynthSpec RunConfig::synth_spec() const {
  synth::SynthSpec s;
  s.base_classes = synth_base;
  s.val_classes = synth_val;
  s.novel_classes = synth_novel;
  s.per_class = synth_per_class;
  s.resolution = resolution;
  s.groups = synth_groups;
  s.noise = synth_noise;
  s.glyph_contrast = synth_glyph_contrast;
  s.position_jitter = synth_position_jitter;
  s.distractors = synth_distractors;
  s.glyph_scale = synth_glyph_scale;
  s.seed = seed;
  return s;
}

std::string to_json(const RunConfig& config) { return as_json(config).dump(2) + "\n"; }

namespace {

Json parse_object(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j;
}

}  // namespace

std::string profile_in(const std::string& json_text) {
  const Json j = parse_object(json_text);
  const auto it = j.find("profile");
  if (it == j.end()) return "";
  if (!it->is_string()) throw ConfigError("profile: expected a string");
  return it->get<std::string>();
}

RunConfig apply_json(const RunConfig& base, const std::string& json_text) {
  const Json overrides = parse_object(json_text);
  Json merged = as_json(base);
  for (const auto& [key, value] : overrides.items()) {
    const auto it = merged.find(key);
    if (it == merged.end()) throw ConfigError("unknown config key '" + key + "'");
    *it = value;
  }
  RunConfig c;
  std::string current;
  try {
#define X(name, note)  \
  current = #name;     \
  merged.at(#name).get_to(c.name);
    LCN4_CONFIG_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(current + ": " + e.what());
  }
  return c;
}

std::vector<KeyHelp> describe_keys(const std::string& profile) {
  const Json defaults = as_json(RunConfig::for_profile(profile));
  const auto text = notes();
  std::vector<KeyHelp> out;
  for (const auto& [key, value] : defaults.items()) out.push_back({key, value.dump(), text.at(key)});
  return out;
}

}  // namespace lcn4
