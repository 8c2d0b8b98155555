#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "crm/error.hpp"
#include "crm/harness/pipeline.hpp"

using namespace crm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig tiny_config() {
  return parse_config(R"({
    "seed": 11, "variants": ["baseline", "crm_dnn", "crm_dt"],
    "n_users": 40, "n_items": 80, "sessions_per_user": 2, "session_len": 6, "candidates": 30,
    "max_seq_len": 8, "dim": 8, "hidden": 12, "epochs": 2, "batch_size": 16,
    "dt_d_model": 8, "dt_epochs": 1, "dt_user_dim": 2,
    "index": "ivf", "n_clusters": 8, "n_probe": 8,
    "eval_k": [5, 10], "watch_k": 5, "sweep_grid": [5, 50, 200], "trace_buckets": 6
  })");
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Pipeline, RerunReproducesEveryReportTable) {
  const auto cfg = tiny_config();
  const auto a = fresh_dir("crm_pipe_a"), b = fresh_dir("crm_pipe_b");
  run_pipeline_in(cfg, a);
  run_pipeline_in(cfg, b);
  for (const auto& name : report_table_names(cfg)) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  EXPECT_EQ(slurp(a / "config.resolved.json"), slurp(b / "config.resolved.json"));
  EXPECT_FALSE(fs::exists(a / "FAILED"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, ArtifactsCarryConfigHashAndReload) {
  const auto cfg = tiny_config();
  const auto root = fresh_dir("crm_pipe_root");
  const auto dir = run_pipeline(cfg, root);
  EXPECT_EQ(dir.parent_path(), root);
  EXPECT_NE(dir.filename().string().find(config_hash(cfg).substr(0, 8)), std::string::npos);
  const std::string hash = config_hash(cfg);
  for (const auto& name : report_table_names(cfg)) {
    std::ifstream in(dir / name);
    std::string line;
    std::getline(in, line);
    ASSERT_EQ(line.rfind("config_hash\t", 0), 0u) << name;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ASSERT_EQ(line.rfind(hash + "\t", 0), 0u) << name << ": " << line;
      ++rows;
    }
    EXPECT_GT(rows, 0u) << name;
  }
  // baseline: 1 row, conditioned variants: avg, max, mux
  std::ifstream eval(dir / "eval.tsv");
  std::size_t lines = 0;
  for (std::string l; std::getline(eval, l);) ++lines;
  EXPECT_EQ(lines, 1u + 1 + 3 + 3);

  for (const std::string v : {"baseline", "crm_dnn", "crm_dt"}) {
    const auto model = load_model(dir / ("model_" + v + ".ckpt"));
    EXPECT_EQ(model->variant(), v);
    const auto index = ItemIndex::from_checkpoint(Checkpoint::load(dir / ("index_" + v + ".ckpt")));
    EXPECT_EQ(index.dim(), model->output_dim());
    EXPECT_EQ(index.kind(), IndexKind::ivf);
  }
  EXPECT_TRUE(fs::exists(dir / "sweep_crm_dt.svg"));
  EXPECT_TRUE(fs::exists(dir / "trace.svg"));
  EXPECT_TRUE(fs::exists(dir / "runtime.tsv"));
  const auto report = render_run_report(dir);
  EXPECT_NE(report.find("Retrieval quality"), std::string::npos);
  EXPECT_NE(report.find("crm_dt"), std::string::npos);
  const auto second = run_pipeline(cfg, root);
  EXPECT_NE(second, dir);
  fs::remove_all(root);
}

TEST(Pipeline, StageFailureLeavesMarkedPartialOutput) {
  const auto cfg = tiny_config();
  const auto dir = fresh_dir("crm_pipe_fail");
  fs::create_directories(dir / "events.tsv");  // a directory where the log should go
  try {
    run_pipeline_in(cfg, dir);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "simulate");
  }
  EXPECT_TRUE(fs::exists(dir / "config.resolved.json"));
  EXPECT_EQ(slurp(dir / "FAILED").rfind("simulate\t", 0), 0u);
  EXPECT_NE(render_run_report(dir).find("Failed stage: simulate"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Pipeline, StagesRoundTripThroughSavedArtifacts) {
  const auto cfg = tiny_config();
  const auto dir = fresh_dir("crm_pipe_stage");
  fs::create_directories(dir);
  const auto data = simulate_stage(cfg);
  data.world.save(dir);
  write_events(dir / "events.tsv", data.events);
  const auto loaded = load_simulation(dir, dir / "events.tsv", cfg.max_seq_len);
  EXPECT_TRUE(loaded.world == data.world);
  EXPECT_EQ(loaded.events, data.events);
  EXPECT_EQ(loaded.split.test.size(), data.split.test.size());
  EXPECT_THROW(train_stage(cfg, "gbdt", data.split.train), ConfigError);
  fs::remove_all(dir);
}
