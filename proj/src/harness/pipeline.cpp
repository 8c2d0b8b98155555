#include "crm/harness/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "crm/crm_dt.hpp"
#include "crm/error.hpp"
#include "crm/harness/plot.hpp"
#include "crm/harness/stats.hpp"
#include "crm/text.hpp"

namespace crm {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  return f;
}

std::string fx(double v) { return format_fixed(v, 6); }

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    for (auto f : split(line, '\t')) row.emplace_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows, std::size_t skip_cols) {
  std::ostringstream o;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    o << "|";
    for (std::size_t c = skip_cols; c < rows[r].size(); ++c) o << " " << rows[r][c] << " |";
    o << "\n";
    if (r == 0) {
      o << "|";
      for (std::size_t c = skip_cols; c < rows[r].size(); ++c) o << "---|";
      o << "\n";
    }
  }
  return o.str();
}

}  // namespace

SimulationData simulate_stage(const PipelineConfig& config) {
  SimulationData d;
  WorldConfig wc = config.world;
  wc.seed = config.seed;
  d.world = build_world(wc);
  d.events = generate_sessions(d.world, config.sessions);
  d.histories = group_histories(d.events);
  d.split = split_leave_one_out(d.histories, config.max_seq_len);
  return d;
}

SimulationData load_simulation(const fs::path& world_dir, const fs::path& events_path, std::size_t max_seq_len) {
  SimulationData d;
  d.world = SimWorld::load(world_dir);
  d.events = load_events(events_path, d.world.n_items(), d.world.n_users());
  d.histories = group_histories(d.events);
  d.split = split_leave_one_out(d.histories, max_seq_len);
  return d;
}

TrainedModel train_stage(const PipelineConfig& config, const std::string& variant,
                         std::span<const TrainExample> train_examples) {
  TrainedModel out;
  const auto options = config.train_options(variant);
  if (variant == "crm_dt") {
    auto m = std::make_unique<DtModel>(config.dt_config());
    out.trace = dt_train(*m, train_examples, options);
    out.model = std::move(m);
  } else if (variant == "baseline" || variant == "crm_dnn") {
    const bool conditioned = variant == "crm_dnn";
    auto m = std::make_unique<TwoTowerModel>(config.two_tower_config(conditioned));
    out.trace = train(*m, train_examples, options, conditioned ? ConditionMode::teacher_forced : ConditionMode::off);
    out.model = std::move(m);
  } else {
    throw ConfigError("unknown model variant '" + variant + "'");
  }
  return out;
}

std::unique_ptr<RetrievalModel> load_model(const Checkpoint& ckpt) {
  const auto& variant = ckpt.meta_value("variant");
  if (variant == "crm_dt") return std::make_unique<DtModel>(DtModel::from_checkpoint(ckpt));
  if (variant == "baseline" || variant == "crm_dnn") {
    return std::make_unique<TwoTowerModel>(TwoTowerModel::from_checkpoint(ckpt));
  }
  throw DataError("checkpoint has unknown variant '" + variant + "'");
}

std::unique_ptr<RetrievalModel> load_model(const fs::path& path) {
  try {
    return load_model(Checkpoint::load(path));
  } catch (const Error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ItemIndex index_stage(const PipelineConfig& config, const RetrievalModel& model) {
  return build_index(model.item_vectors(), config.index_config(), splitmix64(config.seed ^ 0x1d3eULL));
}

std::vector<std::optional<ConditionSpec>> eval_conditions(const PipelineConfig& config, const RetrievalModel& model) {
  if (!model.conditioned()) return {std::nullopt};
  return {ConditionSpec::average(config.window), ConditionSpec::maximum(config.window),
          ConditionSpec::multiplexed(config.mux_p, config.window, splitmix64(config.seed ^ 0x3ae1ULL))};
}

EvalOptions eval_options(const PipelineConfig& config) {
  EvalOptions o;
  o.ks = config.eval_k;
  o.watch_k = config.watch_k;
  o.config_hash = config_hash(config);
  return o;
}

ConditioningSummary summarize_conditioning(const std::string& variant, const EvalReport& max_report,
                                           const EvalReport& avg_report, std::span<const double> grid,
                                           std::span<const EvalReport> sweep) {
  ConditioningSummary s;
  s.variant = variant;
  const auto test = paired_t_test(max_report.per_user_oracle_watch, avg_report.per_user_oracle_watch);
  s.n_users = test.n;
  s.mean_watch_max = max_report.mean_oracle_watch;
  s.mean_watch_avg = avg_report.mean_oracle_watch;
  s.mean_diff = test.mean_diff;
  s.t = test.t;
  s.p_greater = test.p_greater;
  std::vector<double> watch;
  for (const auto& r : sweep) watch.push_back(r.mean_oracle_watch);
  s.sweep_spearman = grid.size() >= 2 ? spearman(grid, watch) : 0.0;
  return s;
}

void write_eval_tsv(const fs::path& path, std::span<const EvalReport> reports) {
  auto f = open_out(path);
  f << "config_hash\tvariant\tcondition\tn_users";
  if (!reports.empty()) {
    for (auto k : reports.front().ks) f << "\thit_rate@" << k << "\thit_rate@" << k << "_se";
    f << "\tmean_oracle_watch@" << reports.front().watch_k << "\tmean_oracle_watch_se\tmean_condition";
  }
  f << "\n";
  for (const auto& r : reports) {
    f << r.config_hash << "\t" << r.variant << "\t" << r.condition << "\t" << r.n_users;
    for (std::size_t i = 0; i < r.ks.size(); ++i) f << "\t" << fx(r.hit_rate[i]) << "\t" << fx(r.hit_rate_se[i]);
    f << "\t" << fx(r.mean_oracle_watch) << "\t" << fx(r.mean_oracle_watch_se) << "\t" << fx(r.mean_condition) << "\n";
  }
}

void write_sweep_tsv(const fs::path& path, std::span<const double> grid, std::span<const EvalReport> sweep) {
  if (grid.size() != sweep.size()) throw ShapeError("sweep has " + std::to_string(sweep.size()) + " rows for a grid of " +
                                                    std::to_string(grid.size()));
  auto f = open_out(path);
  f << "config_hash\tvariant\tcondition_seconds";
  if (!sweep.empty()) {
    for (auto k : sweep.front().ks) f << "\thit_rate@" << k;
    f << "\tmean_oracle_watch@" << sweep.front().watch_k << "\tmean_oracle_watch_se";
  }
  f << "\n";
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto& r = sweep[i];
    f << r.config_hash << "\t" << r.variant << "\t" << format_double(grid[i]);
    for (double h : r.hit_rate) f << "\t" << fx(h);
    f << "\t" << fx(r.mean_oracle_watch) << "\t" << fx(r.mean_oracle_watch_se) << "\n";
  }
}

void write_loss_tsv(const fs::path& path, const std::string& hash, const std::string& variant, const TrainTrace& trace) {
  auto f = open_out(path);
  f << "config_hash\tvariant\tepoch\tmean_loss\n";
  for (std::size_t e = 0; e < trace.epoch_loss.size(); ++e) {
    f << hash << "\t" << variant << "\t" << e + 1 << "\t" << fx(trace.epoch_loss[e]) << "\n";
  }
}

void write_conditioning_tsv(const fs::path& path, const std::string& hash, std::span<const ConditioningSummary> rows) {
  auto f = open_out(path);
  f << "config_hash\tvariant\tn_users\tmean_watch_max\tmean_watch_avg\tmean_diff\tt\tp_max_gt_avg\tsweep_spearman\n";
  for (const auto& r : rows) {
    char p[32];
    std::snprintf(p, sizeof(p), "%.6e", r.p_greater);
    f << hash << "\t" << r.variant << "\t" << r.n_users << "\t" << fx(r.mean_watch_max) << "\t" << fx(r.mean_watch_avg)
      << "\t" << fx(r.mean_diff) << "\t" << fx(r.t) << "\t" << p << "\t" << fx(r.sweep_spearman) << "\n";
  }
}

void write_trace_tsv(const fs::path& path, const std::string& hash, std::span<const TraceRow> rows) {
  auto f = open_out(path);
  f << "config_hash\tbucket\thour_start\tusers\trequests\tmean_max_condition\tmean_avg_condition\n";
  for (const auto& r : rows) {
    f << hash << "\t" << r.bucket << "\t" << fx(r.hour_start) << "\t" << r.users << "\t" << r.requests << "\t"
      << fx(r.mean_max) << "\t" << fx(r.mean_avg) << "\n";
  }
}

void write_sweep_svg(const fs::path& path, const std::string& variant, std::span<const double> grid,
                     std::span<const EvalReport> sweep) {
  PlotSeries s{variant, {grid.begin(), grid.end()}, {}};
  for (const auto& r : sweep) s.ys.push_back(r.mean_oracle_watch);
  write_line_plot_svg(path,
                      {"Condition sweep: " + variant, "condition (seconds, log scale)",
                       "mean expected watch time of top-K (s)", true},
                      {s});
}

void write_trace_svg(const fs::path& path, std::span<const TraceRow> rows) {
  PlotSeries mx{"max strategy", {}, {}}, avg{"avg strategy", {}, {}};
  for (const auto& r : rows) {
    mx.xs.push_back(r.hour_start);
    mx.ys.push_back(r.mean_max);
    avg.xs.push_back(r.hour_start);
    avg.ys.push_back(r.mean_avg);
  }
  write_line_plot_svg(path, {"Condition by simulated hour", "hour of day", "mean condition (s)", false}, {mx, avg});
}

std::vector<std::string> report_table_names(const PipelineConfig& config) {
  std::vector<std::string> names = {"eval.tsv", "trace.tsv"};
  bool any_conditioned = false;
  for (const auto& v : config.variants) {
    names.push_back("loss_" + v + ".tsv");
    if (v != "baseline") {
      names.push_back("sweep_" + v + ".tsv");
      any_conditioned = true;
    }
  }
  if (any_conditioned) names.push_back("conditioning.tsv");
  return names;
}

fs::path run_pipeline(const PipelineConfig& config, const fs::path& out_root) {
  config.validate();
  const std::string hash = config_hash(config);
  fs::create_directories(out_root);
  const std::string base = "run-" + utc_stamp() + "-" + hash.substr(0, 8);
  fs::path dir = out_root / base;
  for (int n = 1; fs::exists(dir); ++n) dir = out_root / (base + "-" + std::to_string(n));
  run_pipeline_in(config, dir);
  return dir;
}

void run_pipeline_in(const PipelineConfig& config, const fs::path& dir) {
  config.validate();
  const std::string hash = config_hash(config);
  fs::create_directories(dir);
  fs::remove(dir / "FAILED");

  std::vector<std::pair<std::string, double>> timings;
  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      std::ofstream(dir / "FAILED") << name << "\t" << e.what() << "\n";
      throw StageError(name, e.what());
    }
    timings.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  { auto f = open_out(dir / "config.resolved.json"); f << resolved_config_json(config); }

  SimulationData data;
  stage("simulate", [&] {
    data = simulate_stage(config);
    data.world.save(dir);
    write_events(dir / "events.tsv", data.events);
  });

  const auto opts = eval_options(config);
  std::vector<EvalReport> eval_rows;
  std::vector<ConditioningSummary> conditioning;
  for (const auto& variant : config.variants) {
    TrainedModel trained;
    ItemIndex index;
    stage("train:" + variant, [&] {
      trained = train_stage(config, variant, data.split.train);
      trained.model->to_checkpoint().save(dir / ("model_" + variant + ".ckpt"));
      write_loss_tsv(dir / ("loss_" + variant + ".tsv"), hash, variant, trained.trace);
    });
    stage("index:" + variant, [&] {
      index = index_stage(config, *trained.model);
      index.to_checkpoint().save(dir / ("index_" + variant + ".ckpt"));
    });
    std::vector<EvalReport> reports;
    stage("eval:" + variant, [&] {
      for (const auto& cond : eval_conditions(config, *trained.model)) {
        reports.push_back(evaluate(*trained.model, index, data.split.test, cond, data.world, opts));
      }
      eval_rows.insert(eval_rows.end(), reports.begin(), reports.end());
      write_eval_tsv(dir / "eval.tsv", eval_rows);
    });
    if (!trained.model->conditioned()) continue;
    stage("sweep:" + variant, [&] {
      const auto sweep = sweep_condition(*trained.model, index, data.split.test, config.sweep_grid, data.world, opts);
      write_sweep_tsv(dir / ("sweep_" + variant + ".tsv"), config.sweep_grid, sweep);
      write_sweep_svg(dir / ("sweep_" + variant + ".svg"), variant, config.sweep_grid, sweep);
      // reports = {avg, max, mux}
      conditioning.push_back(summarize_conditioning(variant, reports[1], reports[0], config.sweep_grid, sweep));
      write_conditioning_tsv(dir / "conditioning.tsv", hash, conditioning);
    });
  }

  stage("trace", [&] {
    const auto rows = condition_trace(data.world, data.histories, config.window, config.trace_buckets);
    write_trace_tsv(dir / "trace.tsv", hash, rows);
    write_trace_svg(dir / "trace.svg", rows);
  });

  auto f = open_out(dir / "runtime.tsv");
  f << "config_hash\tstage\tseconds\n";
  for (const auto& [name, secs] : timings) f << hash << "\t" << name << "\t" << format_fixed(secs, 3) << "\n";
}

std::string render_run_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw DataError("run directory '" + run_dir.string() + "' does not exist");
  std::ostringstream o;
  o << "# Run " << run_dir.filename().string() << "\n\n";
  if (fs::exists(run_dir / "FAILED")) {
    std::ifstream in(run_dir / "FAILED");
    std::string line;
    std::getline(in, line);
    o << "**Incomplete run.** Failed stage: " << line << "\n\n";
  }
  const auto eval_path = run_dir / "eval.tsv";
  if (fs::exists(eval_path)) {
    const auto rows = read_tsv(eval_path);
    if (rows.size() > 1) o << "config hash: `" << rows[1][0] << "`\n\n";
    o << "## Retrieval quality\n\n" << markdown_table(rows, 1) << "\n";
  }
  if (fs::exists(run_dir / "conditioning.tsv")) {
    o << "## Max vs avg condition (paired, one-sided)\n\n" << markdown_table(read_tsv(run_dir / "conditioning.tsv"), 1)
      << "\n";
  }
  if (fs::exists(run_dir / "trace.tsv")) {
    const auto rows = read_tsv(run_dir / "trace.tsv");
    std::vector<double> mx, avg;
    std::size_t max_ge_avg = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      mx.push_back(parse_double(rows[r][5]).value_or(0.0));
      avg.push_back(parse_double(rows[r][6]).value_or(0.0));
      max_ge_avg += mx.back() >= avg.back();
    }
    o << "## Condition trace by simulated hour\n\n"
      << "max >= avg in " << max_ge_avg << " of " << mx.size() << " buckets";
    if (mx.size() >= 2) o << "; correlation " << format_fixed(pearson(mx, avg), 4);
    o << "\n\n" << markdown_table(rows, 1) << "\n";
  }
  if (fs::exists(run_dir / "runtime.tsv")) {
    o << "## Stage timings\n\n" << markdown_table(read_tsv(run_dir / "runtime.tsv"), 1);
  }
  return o.str();
}

}  // namespace crm
