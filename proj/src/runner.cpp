#include "lcn4/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "lcn4/backbone.hpp"
#include "lcn4/errors.hpp"
#include "lcn4/synth.hpp"

namespace lcn4::runner {

namespace fs = std::filesystem;

fs::path output_root() {
  const char* env = std::getenv("LCN4_RUN_DIR");
  return (env && *env) ? fs::path(env) : fs::path("runs");
}

void prepare_run_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec)) {
    if (!force) {
      throw ConfigError("run directory " + dir.string() + " already exists; pass --force to overwrite");
    }
    fs::remove_all(dir, ec);
    if (ec) throw IoError("cannot clear " + dir.string() + ": " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

data::DatasetSplits load_data(const RunConfig& config) {
  if (config.dataset == "synthetic") return synth::generate(config.synth_spec());
  if (!fs::is_directory(config.dataset)) {
    throw ConfigError("dataset: " + config.dataset + " is not a directory");
  }
  if (!fs::is_regular_file(config.splits_file)) {
    throw ConfigError("splits_file: " + config.splits_file + " not found");
  }
  return data::ingest_dataset(config.dataset, config.splits_file, config.resolution);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

EvalReport evaluate_network(Network& net, const data::DatasetSplits& splits, const EvalConfig& ec) {
  NetworkEncoder encoder(net);
  return evaluate(encoder, splits, ec);
}

}  // namespace

TrainOutcome run_training(const RunConfig& config, const data::DatasetSplits& splits,
                          const fs::path& dir, std::ostream& log) {
  config.validate();
  const std::string config_json = to_json(config);
  write_text(dir / "config.json", config_json);
  const auto start = std::chrono::steady_clock::now();

  Network net(config.network(splits.base.size()), config.seed);
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
  csv << "epoch,cls_loss,meta_loss,val_acc,lr\n";
  double best = -1.0;

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    csv << m.epoch << ',' << format_number(m.cls_loss) << ',' << format_number(m.meta_loss) << ','
        << format_number(m.val_accuracy) << ',' << format_number(m.lr) << '\n';
    csv.flush();
    net.save((dir / "last.ckpt").string(), config_json);
    // Without a val split every epoch counts as an improvement.
    const double score = std::isnan(m.val_accuracy) ? static_cast<double>(m.epoch) : m.val_accuracy;
    if (score > best) {
      best = score;
      net.save((dir / "best.ckpt").string(), config_json);
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu  cls %.4f  meta %.4f  val %.2f  lr %.4g  %.0fs",
                  m.epoch, m.cls_loss, m.meta_loss, m.val_accuracy, m.lr, elapsed);
    log << line << std::endl;
  };

  TrainOutcome outcome;
  outcome.history = train(net, splits, config.training(), hooks);
  if (config.epochs > 0) net.load((dir / "best.ckpt").string());
  outcome.report = evaluate_network(net, splits, config.evaluation());
  outcome.report.write_csv(dir / "report.csv");
  outcome.report.write_confusion_pgm(dir / "confusion.pgm");
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

EvalReport run_evaluation(const RunConfig& config, const data::DatasetSplits& splits,
                          const fs::path& checkpoint, const fs::path& dir) {
  config.validate();
  EvalReport report;
  if (checkpoint.empty()) {
    OracleEncoder oracle;
    report = evaluate(oracle, splits, config.evaluation());
  } else {
    Network net(config.network(splits.base.size()), config.seed);
    net.load(checkpoint.string());
    report = evaluate_network(net, splits, config.evaluation());
  }
  report.write_csv(dir / "report.csv");
  report.write_confusion_pgm(dir / "confusion.pgm");
  return report;
}

namespace {

bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected on/off, got '" + value + "'");
}

void apply_toggle(RunConfig& c, const std::string& key, const std::string& value) {
  const std::map<std::string, bool RunConfig::*> switches{
      {"nfc", &RunConfig::nfc},
      {"cfc", &RunConfig::cfc},
      {"fdc", &RunConfig::fdc},
      {"stem1_lafcm", &RunConfig::stem1_lafcm},
      {"stem2_lafcm", &RunConfig::stem2_lafcm},
      {"constell1", &RunConfig::constell1},
      {"constell2", &RunConfig::constell2},
  };
  if (const auto it = switches.find(key); it != switches.end()) {
    c.*(it->second) = parse_switch(key, value);
  } else if (key == "branches") {
    c.branches = value;
  } else if (key == "metric") {
    c.metric = value;
  } else {
    throw ConfigError("unknown ablation toggle '" + key + "'");
  }
}

}  // namespace

std::vector<AblationRow> ablation_suite(const std::string& suite, const RunConfig& base) {
  auto with = [&](const std::string& name, const std::string& toggles) {
    RunConfig c = base;
    std::stringstream ss(toggles);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      apply_toggle(c, item.substr(0, eq), item.substr(eq + 1));
    }
    return AblationRow{name, c};
  };
  std::vector<AblationRow> rows;
  if (suite == "default") {
    rows.push_back(with("default", ""));
  } else if (suite == "table2") {
    rows.push_back(with("BL", "nfc=off,cfc=on,fdc=off"));
    rows.push_back(with("M1", "nfc=on,cfc=on,fdc=off"));
    rows.push_back(with("M2", "nfc=off,cfc=on,fdc=on"));
    rows.push_back(with("LCN-4", "nfc=on,cfc=on,fdc=on"));
  } else if (suite == "table3") {
    rows.push_back(with("M3", "stem1_lafcm=off,stem2_lafcm=off"));
    rows.push_back(with("M4", "stem1_lafcm=off"));
    rows.push_back(with("M5", "stem2_lafcm=off"));
    rows.push_back(with("M6", "constell1=off,constell2=off"));
    rows.push_back(with("M7", "constell1=off"));
    rows.push_back(with("M8", "constell2=off"));
    rows.push_back(with("LCN-4", ""));
  } else if (suite == "table6") {
    for (const char* metric : {"cosine", "bcd"}) {
      for (const char* branches : {"1000", "1100", "1110", "1111"}) {
        rows.push_back(with(std::string(metric) + "-" + branches,
                            std::string("metric=") + metric + ",branches=" + branches));
      }
    }
  } else {
    throw ConfigError("unknown ablation suite '" + suite + "' (table2, table3, table6, default)");
  }
  for (const auto& r : rows) r.config.validate();
  return rows;
}

std::vector<AblationRow> toggle_rows(const std::vector<std::string>& toggles,
                                     const RunConfig& base) {
  std::vector<AblationRow> rows = ablation_suite("default", base);
  for (const std::string& set : toggles) {
    RunConfig c = base;
    std::stringstream ss(set);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("toggle '" + item + "' is not key=value");
      apply_toggle(c, item.substr(0, eq), item.substr(eq + 1));
    }
    c.validate();
    rows.push_back({set, c});
  }
  return rows;
}

std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& rows,
                                         const data::DatasetSplits& splits,
                                         const fs::path& dir, std::ostream& log) {
  std::ofstream csv(dir / "ablation.csv");
  if (!csv) throw IoError("cannot write " + (dir / "ablation.csv").string());
  csv << kAblationHeader << '\n';

  // Networks keyed by the training-relevant part of the configuration.
  std::map<std::string, std::unique_ptr<Network>> trained;
  std::vector<AblationResult> results;
  for (const AblationRow& row : rows) {
    RunConfig train_cfg = row.config;
    train_cfg.branches = "1111";
    train_cfg.metric = "cosine";
    const std::string key = to_json(train_cfg);
    auto it = trained.find(key);
    if (it == trained.end()) {
      log << "training " << row.name << std::endl;
      auto net = std::make_unique<Network>(train_cfg.network(splits.base.size()), train_cfg.seed);
      train(*net, splits, train_cfg.training());
      it = trained.emplace(key, std::move(net)).first;
    }
    AblationResult result{row, {}, {}};
    EvalConfig ec = row.config.evaluation();
    ec.spec.shot = 1;
    result.one_shot = evaluate_network(*it->second, splits, ec);
    ec.spec.shot = 5;
    result.five_shot = evaluate_network(*it->second, splits, ec);

    const RunConfig& c = row.config;
    auto flag = [](bool b) { return b ? "on" : "off"; };
    csv << row.name << ',' << flag(c.nfc) << ',' << flag(c.cfc) << ',' << flag(c.fdc) << ','
        << flag(c.stem1_lafcm) << ',' << flag(c.stem2_lafcm) << ',' << flag(c.constell1) << ','
        << flag(c.constell2) << ',' << c.branches << ',' << to_string(parse_metric(c.metric))
        << ',' << format_number(result.one_shot.mean_accuracy) << ','
        << format_number(result.one_shot.ci95) << ','
        << format_number(result.five_shot.mean_accuracy) << ','
        << format_number(result.five_shot.ci95) << '\n';
    csv.flush();
    log << row.name << "  1-shot " << result.one_shot.summary() << "  5-shot "
        << result.five_shot.summary() << std::endl;
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace lcn4::runner
