#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crm/datasets.hpp"
#include "crm/error.hpp"
#include "crm/features.hpp"
#include "crm/harness/config.hpp"
#include "crm/harness/evaluate.hpp"
#include "crm/harness/trace.hpp"
#include "crm/retrieval.hpp"
#include "crm/simulator.hpp"
#include "crm/towers.hpp"

namespace crm {

struct SimulationData {
  SimWorld world;
  std::vector<InteractionEvent> events;
  std::vector<UserHistory> histories;
  LeaveOneOutSplit split;
};

SimulationData simulate_stage(const PipelineConfig& config);
// Rebuilds histories and the split from saved artifacts.
SimulationData load_simulation(const std::filesystem::path& world_dir, const std::filesystem::path& events_path,
                               std::size_t max_seq_len);

struct TrainedModel {
  std::unique_ptr<RetrievalModel> model;
  TrainTrace trace;
};

TrainedModel train_stage(const PipelineConfig& config, const std::string& variant,
                         std::span<const TrainExample> train_examples);

// Dispatches on the checkpoint's variant tag.
std::unique_ptr<RetrievalModel> load_model(const Checkpoint& ckpt);
std::unique_ptr<RetrievalModel> load_model(const std::filesystem::path& path);

ItemIndex index_stage(const PipelineConfig& config, const RetrievalModel& model);

// Conditions evaluated for a model: none for unconditioned models, else
// avg, max and mux:<mux_p>.
std::vector<std::optional<ConditionSpec>> eval_conditions(const PipelineConfig& config, const RetrievalModel& model);
EvalOptions eval_options(const PipelineConfig& config);

// Paired comparison of the max and avg conditions plus the sweep trend.
struct ConditioningSummary {
  std::string variant;
  std::size_t n_users = 0;
  double mean_watch_max = 0.0;
  double mean_watch_avg = 0.0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p_greater = 1.0;
  double sweep_spearman = 0.0;
};

ConditioningSummary summarize_conditioning(const std::string& variant, const EvalReport& max_report,
                                           const EvalReport& avg_report, std::span<const double> grid,
                                           std::span<const EvalReport> sweep);

// Report tables. Every row starts with the config hash.
void write_eval_tsv(const std::filesystem::path& path, std::span<const EvalReport> reports);
void write_sweep_tsv(const std::filesystem::path& path, std::span<const double> grid, std::span<const EvalReport> sweep);
void write_loss_tsv(const std::filesystem::path& path, const std::string& hash, const std::string& variant,
                    const TrainTrace& trace);
void write_conditioning_tsv(const std::filesystem::path& path, const std::string& hash,
                            std::span<const ConditioningSummary> rows);
void write_trace_tsv(const std::filesystem::path& path, const std::string& hash, std::span<const TraceRow> rows);

void write_sweep_svg(const std::filesystem::path& path, const std::string& variant, std::span<const double> grid,
                     std::span<const EvalReport> sweep);
void write_trace_svg(const std::filesystem::path& path, std::span<const TraceRow> rows);

// Tables compared between reruns; runtime.tsv is deliberately not one of them.
std::vector<std::string> report_table_names(const PipelineConfig& config);

// Runs simulate -> train -> index -> evaluate -> sweep -> trace for every
// variant into <out_root>/run-<UTC timestamp>-<hash prefix>. On a stage
// failure the directory keeps what was written, gains a FAILED file naming
// the stage, and a StageError is thrown.
std::filesystem::path run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_root);
// Same, into an explicit directory (created if needed, reused if present).
void run_pipeline_in(const PipelineConfig& config, const std::filesystem::path& run_dir);

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Human-readable summary of a finished run directory (markdown tables).
std::string render_run_report(const std::filesystem::path& run_dir);

}  // namespace crm
