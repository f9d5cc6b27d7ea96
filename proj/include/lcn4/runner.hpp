#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lcn4/config.hpp"
#include "lcn4/dataset.hpp"
#include "lcn4/metrics.hpp"
#include "lcn4/training.hpp"

// Batch pipelines shared by the command-line tool and the acceptance run.
namespace lcn4::runner {

// $LCN4_RUN_DIR when set, otherwise "runs".
std::filesystem::path output_root();

// Creates `dir`. An existing non-empty directory is a ConfigError unless
// `force`, in which case it is emptied first.
void prepare_run_dir(const std::filesystem::path& dir, bool force);

// Synthetic data or a class-per-directory tree, as the config says.
data::DatasetSplits load_data(const RunConfig& config);

struct TrainOutcome {
  std::vector<EpochMetrics> history;
  EvalReport report;  // novel split, best checkpoint
  double seconds = 0.0;
};

// Writes config.json before any computation, then metrics.csv
// ("epoch,cls_loss,meta_loss,val_acc,lr"), last.ckpt, best.ckpt (highest
// val accuracy), report.csv and confusion.pgm.
TrainOutcome run_training(const RunConfig& config, const data::DatasetSplits& splits,
                          const std::filesystem::path& dir, std::ostream& log);

// Evaluates a checkpoint (or the one-hot oracle when `checkpoint` is empty)
// and writes report.csv and confusion.pgm into `dir`.
EvalReport run_evaluation(const RunConfig& config, const data::DatasetSplits& splits,
                          const std::filesystem::path& checkpoint,
                          const std::filesystem::path& dir);

struct AblationRow {
  std::string name;
  RunConfig config;
};

// "table2": BL, M1, M2 and the full model. "table3": M3..M8 and the full
// model. "table6": Z1; Z1+Z2; Z1+Z2+Z3; all four, each under both metrics.
// "default": the base configuration alone.
std::vector<AblationRow> ablation_suite(const std::string& suite, const RunConfig& base);

// One row per toggle set, after the default row. A toggle set is
// "key=value[,key=value...]" over nfc, cfc, fdc, stem1_lafcm, stem2_lafcm,
// constell1, constell2, branches and metric.
std::vector<AblationRow> toggle_rows(const std::vector<std::string>& toggles,
                                     const RunConfig& base);

inline constexpr const char* kAblationHeader =
    "name,nfc,cfc,fdc,stem1_lafcm,stem2_lafcm,constell1,constell2,branches,metric,"
    "acc_1shot,ci_1shot,acc_5shot,ci_5shot";

struct AblationResult {
  AblationRow row;
  EvalReport one_shot;
  EvalReport five_shot;
};

// Trains every row under the shared seed (rows that differ only in
// evaluation settings share one trained network) and writes ablation.csv.
std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& rows,
                                         const data::DatasetSplits& splits,
                                         const std::filesystem::path& dir, std::ostream& log);

}  // namespace lcn4::runner
