#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "lcn4/config.hpp"
#include "lcn4/errors.hpp"
#include "lcn4/runner.hpp"

using namespace lcn4;
namespace fs = std::filesystem;

namespace {

int exit_code(const std::string& args, const fs::path& run_root) {
  const std::string cmd = "LCN4_RUN_DIR='" + run_root.string() + "' '" LCN4_CLI_PATH "' " + args +
                          " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, ProfilesCarryTheirDefaults) {
  const RunConfig desk = RunConfig::for_profile("desk");
  EXPECT_EQ(desk.clusters, 16u);
  EXPECT_EQ(desk.heads, 4u);
  EXPECT_EQ(desk.fourier_count, 16u);
  EXPECT_EQ(desk.epochs, 10u);
  EXPECT_EQ(desk.episodes_per_epoch, 200u);
  EXPECT_NO_THROW(desk.validate());

  const RunConfig paper = RunConfig::for_profile("paper");
  EXPECT_EQ(paper.clusters, 64u);
  EXPECT_EQ(paper.heads, 8u);
  EXPECT_EQ(paper.fourier_count, 64u);
  EXPECT_EQ(paper.epochs, 60u);
  EXPECT_EQ(paper.episodes_per_epoch, 1000u);
  EXPECT_EQ(paper.lr_schedule, (std::vector<std::pair<std::size_t, double>>{{20, 0.1}, {40, 0.06}, {60, 0.012}}));
  EXPECT_EQ(paper.alpha, 0.75);
  EXPECT_EQ(paper.beta, 0.5);
  EXPECT_EQ(paper.gamma, 0.25);
  EXPECT_THROW(paper.validate(), ConfigError);  // no dataset named
  EXPECT_THROW(RunConfig::for_profile("laptop"), ConfigError);
}

TEST(RunConfig, JsonRoundTripAndOverrides) {
  const RunConfig desk = RunConfig::for_profile("desk");
  EXPECT_EQ(to_json(apply_json(desk, to_json(desk))), to_json(desk));
  const RunConfig c = apply_json(desk, R"({"clusters": 8, "metric": "bcd", "lr_schedule": [[3, 0.2]]})");
  EXPECT_EQ(c.clusters, 8u);
  EXPECT_EQ(c.metric, "bcd");
  EXPECT_EQ(c.heads, desk.heads);
  EXPECT_EQ(c.lr_schedule.size(), 1u);
  EXPECT_EQ(profile_in(R"({"profile": "paper"})"), "paper");
  EXPECT_EQ(profile_in("{}"), "");
}

TEST(RunConfig, UnknownKeyAndTypeErrorsNameTheKey) {
  const RunConfig desk = RunConfig::for_profile("desk");
  try {
    apply_json(desk, R"({"clustres": 8})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("clustres"), std::string::npos);
  }
  try {
    apply_json(desk, R"({"heads": "four"})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("heads"), std::string::npos);
  }
  EXPECT_THROW(apply_json(desk, "{not json"), ConfigError);
}

TEST(RunConfig, ValidationCatchesInconsistencies) {
  auto bad = [](auto mutate) {
    RunConfig c = RunConfig::for_profile("desk");
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.metric = "l1"; });
  bad([](RunConfig& c) { c.branches = "0111"; });
  bad([](RunConfig& c) { c.branches = "11"; });
  bad([](RunConfig& c) { c.way = 1; });
  bad([](RunConfig& c) { c.shot = 0; });
  bad([](RunConfig& c) { c.heads = 3; });
  bad([](RunConfig& c) { c.cfc = false; });
  bad([](RunConfig& c) { c.lr_schedule.clear(); });
  bad([](RunConfig& c) { c.dataset = "/data/cub"; });
}

TEST(RunConfig, ConvertersCarryFields) {
  RunConfig c = RunConfig::for_profile("desk");
  c.branches = "1010";
  c.metric = "bcd";
  EXPECT_EQ(c.branch_mask(), (std::array<bool, kBranches>{true, false, true, false}));
  EXPECT_EQ(c.evaluation().metric, Metric::bray_curtis);
  EXPECT_EQ(c.network(12).num_classes, 12u);
  EXPECT_EQ(c.network(12).clusters, 16u);
  EXPECT_EQ(c.training().schedule.steps, c.lr_schedule);
  EXPECT_EQ(c.synth_spec().novel_classes, c.synth_novel);
}

TEST(RunConfig, EveryKeyDescribed) {
  const auto keys = describe_keys("desk");
  std::set<std::string> names;
  for (const auto& k : keys) {
    EXPECT_FALSE(k.note.empty()) << k.key;
    names.insert(k.key);
  }
  for (const char* expected : {"clusters", "heads", "fourier_count", "amplitude", "lr_schedule", "branches", "synth_glyph_scale"}) {
    EXPECT_TRUE(names.count(expected)) << expected;
  }
  EXPECT_EQ(names.size(), keys.size());
}

TEST(Ablation, TableTwoAndThreeRowsAreDistinct) {
  const RunConfig base = RunConfig::for_profile("desk");
  const auto t2 = runner::ablation_suite("table2", base);
  ASSERT_EQ(t2.size(), 4u);
  std::set<std::tuple<bool, bool, bool>> flags;
  for (const auto& r : t2) {
    EXPECT_NO_THROW(r.config.validate()) << r.name;
    flags.insert({r.config.nfc, r.config.cfc, r.config.fdc});
  }
  EXPECT_EQ(flags.size(), 4u);

  const auto t3 = runner::ablation_suite("table3", base);
  ASSERT_EQ(t3.size(), 7u);
  std::set<std::string> placements;
  for (const auto& r : t3) {
    EXPECT_NO_THROW(r.config.validate()) << r.name;
    placements.insert(std::to_string(r.config.stem1_lafcm) + std::to_string(r.config.stem2_lafcm) +
                      std::to_string(r.config.constell1) + std::to_string(r.config.constell2));
  }
  EXPECT_EQ(placements.size(), 7u);
  EXPECT_EQ(runner::ablation_suite("table6", base).size(), 8u);
  EXPECT_THROW(runner::ablation_suite("table9", base), ConfigError);
}

TEST(Ablation, ToggleRows) {
  const RunConfig base = RunConfig::for_profile("desk");
  const auto rows = runner::toggle_rows({"fdc=0", "constell1=false,metric=bcd"}, base);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].config.fdc);
  EXPECT_FALSE(rows[1].config.fdc);
  EXPECT_FALSE(rows[2].config.constell1);
  EXPECT_EQ(rows[2].config.metric, "bcd");
  EXPECT_THROW(runner::toggle_rows({"heads=2"}, base), ConfigError);
  EXPECT_THROW(runner::toggle_rows({"nfc"}, base), ConfigError);
}

TEST(RunDir, RefusesToClobber) {
  const fs::path dir = fs::temp_directory_path() / "lcn4_rundir_test";
  fs::remove_all(dir);
  runner::prepare_run_dir(dir, false);
  std::ofstream(dir / "keep.txt") << "x";
  EXPECT_THROW(runner::prepare_run_dir(dir, false), ConfigError);
  runner::prepare_run_dir(dir, true);
  EXPECT_FALSE(fs::exists(dir / "keep.txt"));
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const fs::path root = fs::temp_directory_path() / "lcn4_cli_test";
  fs::remove_all(root);
  fs::create_directories(root);
  EXPECT_EQ(exit_code("--help", root), 0);
  EXPECT_EQ(exit_code("", root), 2);
  EXPECT_EQ(exit_code("train --no-such-flag", root), 2);
  EXPECT_EQ(exit_code("eval --oracle --episodes 20 --name o1", root), 0);
  EXPECT_TRUE(fs::exists(root / "o1" / "report.csv"));
  EXPECT_EQ(exit_code("eval --oracle --episodes 20 --name o1", root), 2);
  EXPECT_EQ(exit_code("eval --oracle --episodes 20 --name o1 --force", root), 0);
  EXPECT_EQ(exit_code("eval --oracle --metric l2 --name o2", root), 2);
  EXPECT_EQ(exit_code("eval --profile paper --oracle --name o3", root), 2);
  EXPECT_EQ(exit_code("eval --checkpoint '" + (root / "missing.ckpt").string() + "' --name o4", root), 4);
  std::ofstream(root / "bad.json") << R"({"clustres": 8})";
  EXPECT_EQ(exit_code("eval --oracle --config '" + (root / "bad.json").string() + "' --name o5", root), 2);
  EXPECT_EQ(exit_code("encode-demo --encoding fdc --height 4 --width 5 --channels 8 --fourier 8 --out '" +
                          (root / "demo").string() + "'", root), 0);
  EXPECT_TRUE(fs::exists(root / "demo" / "channel_007.pgm"));
  fs::remove_all(root);
}
