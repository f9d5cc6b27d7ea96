#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "lcn4/checkpoint.hpp"
#include "lcn4/config.hpp"
#include "lcn4/errors.hpp"
#include "lcn4/image_io.hpp"
#include "lcn4/position_encoding.hpp"
#include "lcn4/runner.hpp"
#include "lcn4/synth.hpp"

namespace fs = std::filesystem;
using namespace lcn4;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flags shared by the commands that resolve a RunConfig.
struct CommonFlags {
  std::string config_path;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> way, shot, query, episodes, epochs;
  std::optional<std::string> metric;
  std::string name;
  bool force = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON file overriding profile defaults");
    cmd->add_option("--profile", profile, "desk or paper");
    cmd->add_option("--seed", seed, "global seed");
    cmd->add_option("--way", way, "evaluation way K");
    cmd->add_option("--shot", shot, "evaluation shot N");
    cmd->add_option("--query", query, "evaluation queries per class");
    cmd->add_option("--episodes", episodes, "episodes per epoch");
    cmd->add_option("--epochs", epochs, "epochs");
    cmd->add_option("--metric", metric, "cosine or bcd");
    cmd->add_option("--name", name, "run directory name under the output root");
    cmd->add_flag("--force", force, "overwrite an existing run directory");
  }

  // `base_json` sits between the profile defaults and the --config file.
  // Episode and epoch flags address training for `train`, evaluation
  // otherwise.
  RunConfig resolve(bool training, const std::string& base_json = "") const {
    std::string file_json = config_path.empty() ? "" : read_file(config_path);
    std::string chosen = "desk";
    if (!base_json.empty() && !profile_in(base_json).empty()) chosen = profile_in(base_json);
    if (!file_json.empty() && !profile_in(file_json).empty()) chosen = profile_in(file_json);
    if (profile) chosen = *profile;
    RunConfig c = RunConfig::for_profile(chosen);
    if (!base_json.empty()) c = apply_json(c, base_json);
    if (!file_json.empty()) c = apply_json(c, file_json);
    c.profile = chosen;
    if (seed) c.seed = *seed;
    if (way) c.way = *way;
    if (shot) c.shot = *shot;
    if (query) c.query = *query;
    if (metric) c.metric = *metric;
    if (episodes) (training ? c.episodes_per_epoch : c.eval_episodes) = *episodes;
    if (epochs) (training ? c.epochs : c.eval_epochs) = *epochs;
    c.validate();
    return c;
  }

  fs::path run_dir(const std::string& command, const RunConfig& c) const {
    const std::string leaf =
        name.empty() ? command + "-" + c.profile + "-seed" + std::to_string(c.seed) : name;
    return runner::output_root() / leaf;
  }
};

std::string key_table() {
  std::ostringstream out;
  out << "Config keys (desk default | paper default):\n";
  const auto desk = describe_keys("desk");
  const auto paper = describe_keys("paper");
  for (std::size_t i = 0; i < desk.size(); ++i) {
    out << "  " << desk[i].key << " = " << desk[i].default_value;
    if (paper[i].default_value != desk[i].default_value) out << " | " << paper[i].default_value;
    out << "\n      " << desk[i].note << "\n";
  }
  out << "\nLCN4_RUN_DIR overrides the output root (default ./runs).\n"
         "Exit codes: 0 ok, 2 configuration, 3 numeric abort, 4 I/O.";
  return out.str();
}

void dump_channels(const Tensor& nhwc, const fs::path& dir) {
  const std::size_t h = nhwc.dim(1), w = nhwc.dim(2), c = nhwc.dim(3);
  const auto data = nhwc.data();
  std::vector<double> plane(h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = data[i * c + ch];
    char file[32];
    std::snprintf(file, sizeof file, "channel_%03zu.pgm", ch);
    image::write_pgm_scaled(dir / file, w, h, plane.data());
  }
}

int run(int argc, char** argv) {
  CLI::App app{"LCN-4 few-shot training, evaluation and ablation"};
  app.require_subcommand(1);
  app.footer(key_table());

  CommonFlags train_flags, eval_flags, ablate_flags, synth_flags;

  auto* train_cmd = app.add_subcommand("train", "train on a dataset and evaluate the best checkpoint");
  train_flags.attach(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the novel split");
  eval_flags.attach(eval_cmd);
  std::string checkpoint;
  bool oracle = false;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint written by train");
  eval_cmd->add_flag("--oracle", oracle, "score the one-hot class oracle instead of a network");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate a set of configurations");
  ablate_flags.attach(ablate_cmd);
  std::string suite;
  std::vector<std::string> toggles;
  ablate_cmd->add_option("--suite", suite, "table2, table3, table6 or default");
  ablate_cmd->add_option("--toggle", toggles, "key=value[,key=value] row on top of the default row");

  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic dataset as PPM images");
  synth_flags.attach(synth_cmd);

  auto* demo_cmd = app.add_subcommand("encode-demo", "dump a positional encoding as PGM files");
  std::string encoding = "grid", demo_out;
  std::size_t height = 8, width = 8, channels = 16, fourier = 16;
  double amplitude = 1.0, distance = 1.0;
  bool demo_force = false;
  demo_cmd->add_option("--encoding", encoding, "grid, sincos or fdc")
      ->check(CLI::IsMember({"grid", "sincos", "fdc"}));
  demo_cmd->add_option("--height", height);
  demo_cmd->add_option("--width", width);
  demo_cmd->add_option("--channels", channels, "C for grid, k for sincos and fdc");
  demo_cmd->add_option("--fourier", fourier, "N for fdc");
  demo_cmd->add_option("--amplitude", amplitude, "A for fdc");
  demo_cmd->add_option("--distance", distance, "constant distance-map value for fdc");
  demo_cmd->add_option("--out", demo_out, "output directory");
  demo_cmd->add_flag("--force", demo_force, "overwrite an existing directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*train_cmd) {
    const RunConfig c = train_flags.resolve(true);
    const fs::path dir = train_flags.run_dir("train", c);
    runner::prepare_run_dir(dir, train_flags.force);
    const auto splits = runner::load_data(c);
    const auto outcome = runner::run_training(c, splits, dir, std::cout);
    std::printf("%s  (%zu-way %zu-shot, %.0fs, %s)\n", outcome.report.summary().c_str(), c.way,
                c.shot, outcome.seconds, dir.string().c_str());
  } else if (*eval_cmd) {
    if (checkpoint.empty() && !oracle) throw ConfigError("eval needs --checkpoint or --oracle");
    const std::string stored = checkpoint.empty() ? "" : checkpoint::read(checkpoint).config_json;
    const RunConfig c = eval_flags.resolve(false, stored);
    const fs::path dir = eval_flags.run_dir("eval", c);
    runner::prepare_run_dir(dir, eval_flags.force);
    std::ofstream(dir / "config.json") << to_json(c);
    const auto splits = runner::load_data(c);
    const auto report = runner::run_evaluation(c, splits, oracle ? fs::path() : fs::path(checkpoint), dir);
    std::printf("%s\n", report.summary().c_str());
  } else if (*ablate_cmd) {
    const RunConfig c = ablate_flags.resolve(true);
    const auto rows = suite.empty() ? runner::toggle_rows(toggles, c)
                                    : runner::ablation_suite(suite, c);
    if (!suite.empty() && !toggles.empty()) throw ConfigError("--suite and --toggle are exclusive");
    const fs::path dir = ablate_flags.run_dir("ablate", c);
    runner::prepare_run_dir(dir, ablate_flags.force);
    std::ofstream(dir / "config.json") << to_json(c);
    const auto splits = runner::load_data(c);
    runner::run_ablation(rows, splits, dir, std::cout);
    std::printf("%s\n", (dir / "ablation.csv").string().c_str());
  } else if (*synth_cmd) {
    const RunConfig c = synth_flags.resolve(false);
    const fs::path dir = synth_flags.run_dir("synth", c);
    runner::prepare_run_dir(dir, synth_flags.force);
    const synth::SynthSpec spec = c.synth_spec();
    const auto layout = synth::class_layout(spec);
    std::ofstream splits_out(dir / "splits.tsv");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& cls = layout[i];
      const std::string name = "g" + std::to_string(cls.group) + "_a" + std::to_string(cls.anchor) +
                               "_o" + std::to_string(cls.orientation);
      const char* split = i < spec.base_classes                       ? "base"
                          : i < spec.base_classes + spec.val_classes ? "val"
                                                                      : "novel";
      splits_out << name << '\t' << split << '\n';
      fs::create_directories(dir / name);
      for (std::size_t j = 0; j < spec.per_class; ++j) {
        char file[32];
        std::snprintf(file, sizeof file, "%03zu.ppm", j);
        image::write_ppm(dir / name / file, synth::render(spec, cls, j));
      }
    }
    if (!splits_out) throw IoError("cannot write " + (dir / "splits.tsv").string());
    std::printf("%s\n", dir.string().c_str());
  } else if (*demo_cmd) {
    const fs::path dir = demo_out.empty() ? runner::output_root() / ("encode-" + encoding) : fs::path(demo_out);
    runner::prepare_run_dir(dir, demo_force);
    Tensor enc;
    if (encoding == "grid") {
      enc = pe::grid_encode(1, height, width, channels).grid;
    } else if (encoding == "sincos") {
      enc = pe::sincos_encode(1, height, width, channels);
    } else {
      const Tensor d = Tensor::full({1, height, width, channels}, distance);
      enc = pe::fdc_encode(d, fourier, amplitude).encoding;
    }
    dump_channels(enc, dir);
    std::printf("%zu channels -> %s\n", enc.dim(3), dir.string().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  try {
    return run(argc, argv);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const IngestionError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfig;
  } catch (const SamplingError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  }
}
