// Command-line front end: individual pipeline stages plus the full run.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crm/error.hpp"
#include "crm/harness/config.hpp"
#include "crm/harness/evaluate.hpp"
#include "crm/harness/pipeline.hpp"
#include "crm/harness/stats.hpp"
#include "crm/policy.hpp"
#include "crm/text.hpp"

namespace fs = std::filesystem;
using namespace crm;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
};

// Config file when given, otherwise built-in defaults with --seed.
PipelineConfig resolve_config(const Common& c) {
  if (!c.config_path.empty()) return load_config(c.config_path);
  PipelineConfig cfg;
  cfg.seed = c.seed;
  cfg.world.seed = c.seed;
  cfg.variants = {"baseline"};
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file (keys listed under `crm run --help`)");
  app->add_option("--seed", c.seed, "seed used when no --config is given")->capture_default_str();
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  for (auto part : split(text, ',')) {
    auto v = parse_double(part);
    if (!v) throw ConfigError("bad grid value '" + std::string(part) + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> out;
  for (auto part : split(text, ',')) {
    auto v = parse_u64(part);
    if (!v || *v == 0) throw ConfigError("bad K value '" + std::string(part) + "'");
    out.push_back(*v);
  }
  return out;
}

void print_eval(const EvalReport& r) {
  std::cout << "variant\t" << r.variant << "\ncondition\t" << r.condition << "\nusers\t" << r.n_users << "\n";
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    std::cout << "hit_rate@" << r.ks[i] << "\t" << format_fixed(r.hit_rate[i]) << " +- "
              << format_fixed(r.hit_rate_se[i]) << "\n";
  }
  std::cout << "mean_oracle_watch@" << r.watch_k << "\t" << format_fixed(r.mean_oracle_watch) << " +- "
            << format_fixed(r.mean_oracle_watch_se) << "\n";
  if (r.condition != "none") std::cout << "mean_condition\t" << format_fixed(r.mean_condition) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controllable retrieval experiments on a simulated short-video platform"};
  app.require_subcommand(1);

  // simulate
  Common sim_common;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "build a world and its interaction log");
  add_common(sim, sim_common);
  sim->add_option("--out", sim_out, "output directory (world.ckpt, world.meta, events.tsv)")->required();

  // train
  Common train_common;
  std::string train_data, train_variant = "baseline", train_out, train_loss;
  auto* tr = app.add_subcommand("train", "train one model variant on a simulated log");
  add_common(tr, train_common);
  tr->add_option("--data", train_data, "directory written by `simulate`")->required();
  tr->add_option("--variant", train_variant, "baseline | crm_dnn | crm_dt")->capture_default_str();
  tr->add_option("--out", train_out, "model checkpoint path")->required();
  tr->add_option("--loss-out", train_loss, "optional per-epoch loss TSV");

  // build-index
  Common idx_common;
  std::string idx_model, idx_out, idx_kind;
  std::size_t idx_clusters = 0, idx_probe = 0;
  auto* bi = app.add_subcommand("build-index", "cache item vectors of a trained model in a search index");
  add_common(bi, idx_common);
  bi->add_option("--model", idx_model, "model checkpoint")->required();
  bi->add_option("--out", idx_out, "index checkpoint path")->required();
  bi->add_option("--kind", idx_kind, "exact | ivf (default: config `index`, exact)");
  bi->add_option("--clusters", idx_clusters, "IVF clusters (default: config `n_clusters`, 64)");
  bi->add_option("--probe", idx_probe, "IVF probes (default: config `n_probe`, 8)");

  // condition flags shared by eval and retrieve
  std::string condition_text;
  std::size_t window = 32;
  auto add_condition = [&](CLI::App* sub) {
    sub->add_option("--condition", condition_text, "avg | max | mux:<p> | value:<seconds> (conditioned models; default avg)");
    sub->add_option("--window", window, "trailing watch times used by the policy")->capture_default_str();
  };

  // eval
  Common eval_common;
  std::string eval_data, eval_model, eval_index, eval_out, eval_ks = "10,50,100";
  std::size_t eval_watch_k = 50;
  auto* ev = app.add_subcommand("eval", "leave-one-out evaluation of a model and index");
  add_common(ev, eval_common);
  ev->add_option("--data", eval_data, "directory written by `simulate`")->required();
  ev->add_option("--model", eval_model, "model checkpoint")->required();
  ev->add_option("--index", eval_index, "index checkpoint")->required();
  ev->add_option("--k", eval_ks, "comma-separated HitRate cutoffs")->capture_default_str();
  ev->add_option("--watch-k", eval_watch_k, "top-K for the oracle watch-time metric")->capture_default_str();
  ev->add_option("--out", eval_out, "optional TSV output");
  add_condition(ev);

  // sweep
  Common sweep_common;
  std::string sweep_data, sweep_model, sweep_index, sweep_out, sweep_grid = "2,5,10,20,40,80,160,300";
  auto* sw = app.add_subcommand("sweep", "evaluate a conditioned model over a grid of explicit conditions");
  add_common(sw, sweep_common);
  sw->add_option("--data", sweep_data, "directory written by `simulate`")->required();
  sw->add_option("--model", sweep_model, "model checkpoint")->required();
  sw->add_option("--index", sweep_index, "index checkpoint")->required();
  sw->add_option("--grid", sweep_grid, "ascending condition values in seconds")->capture_default_str();
  sw->add_option("--out", sweep_out, "output prefix; writes <prefix>.tsv and <prefix>.svg")->required();

  // report
  std::string report_run, report_out;
  auto* rep = app.add_subcommand("report", "summarize a run directory as markdown");
  rep->add_option("--run", report_run, "run directory written by `run`")->required();
  rep->add_option("--out", report_out, "write the summary here instead of stdout");

  // retrieve
  Common ret_common;
  std::string ret_data, ret_model, ret_index;
  UserId ret_user = 0;
  std::size_t ret_k = 10;
  auto* ret = app.add_subcommand("retrieve", "top-K items for one user's full history");
  add_common(ret, ret_common);
  ret->add_option("--data", ret_data, "directory written by `simulate`")->required();
  ret->add_option("--model", ret_model, "model checkpoint")->required();
  ret->add_option("--index", ret_index, "index checkpoint")->required();
  ret->add_option("--user", ret_user, "user id")->required();
  ret->add_option("--k", ret_k, "items to return")->capture_default_str();
  add_condition(ret);

  // run
  std::string run_config, run_out = "runs";
  auto* run = app.add_subcommand("run", "full pipeline: simulate, train, index, eval, sweep, trace");
  run->add_option("--config", run_config, "JSON config file")->required();
  run->add_option("--out", run_out, "parent directory of the run directory")->capture_default_str();
  run->footer("Config keys (JSON object; defaults shown):\n" + config_keys_help());

  CLI11_PARSE(app, argc, argv);

  auto data_paths = [](const std::string& dir) { return std::pair{fs::path(dir), fs::path(dir) / "events.tsv"}; };
  auto condition_for = [&](const RetrievalModel& model, std::uint64_t seed) -> std::optional<ConditionSpec> {
    if (!model.conditioned()) {
      if (!condition_text.empty()) std::cerr << "note: " << model.variant() << " ignores --condition\n";
      return std::nullopt;
    }
    return parse_condition(condition_text.empty() ? "avg" : condition_text, window, seed);
  };

  try {
    if (*sim) {
      const auto cfg = resolve_config(sim_common);
      const auto data = simulate_stage(cfg);
      fs::create_directories(sim_out);
      data.world.save(sim_out);
      write_events(fs::path(sim_out) / "events.tsv", data.events);
      std::cout << "wrote " << data.events.size() << " events for " << data.world.n_users() << " users to " << sim_out
                << "\n";
    } else if (*tr) {
      const auto cfg = resolve_config(train_common);
      auto [world_dir, events] = data_paths(train_data);
      const auto data = load_simulation(world_dir, events, cfg.max_seq_len);
      PipelineConfig run_cfg = cfg;
      run_cfg.world = data.world.config;
      const auto trained = train_stage(run_cfg, train_variant, data.split.train);
      trained.model->to_checkpoint().save(train_out);
      for (std::size_t e = 0; e < trained.trace.epoch_loss.size(); ++e) {
        std::cout << "epoch " << e + 1 << "\tloss " << format_fixed(trained.trace.epoch_loss[e]) << "\n";
      }
      if (!train_loss.empty()) write_loss_tsv(train_loss, config_hash(run_cfg), train_variant, trained.trace);
    } else if (*bi) {
      auto cfg = resolve_config(idx_common);
      if (!idx_kind.empty()) cfg.index = idx_kind;
      if (idx_clusters) cfg.n_clusters = idx_clusters;
      if (idx_probe) cfg.n_probe = idx_probe;
      const auto model = load_model(fs::path(idx_model));
      cfg.world.n_items = model->n_items();
      cfg.validate();
      const auto index = index_stage(cfg, *model);
      index.to_checkpoint().save(idx_out);
      std::cout << "indexed " << index.size() << " items (" << cfg.index << ")\n";
    } else if (*ev) {
      const auto cfg = resolve_config(eval_common);
      auto [world_dir, events] = data_paths(eval_data);
      const auto model = load_model(fs::path(eval_model));
      const auto data = load_simulation(world_dir, events, cfg.max_seq_len);
      const auto index = ItemIndex::from_checkpoint(Checkpoint::load(eval_index));
      EvalOptions opts;
      opts.ks = parse_ks(eval_ks);
      opts.watch_k = eval_watch_k;
      opts.config_hash = config_hash(cfg);
      const auto report =
          evaluate(*model, index, data.split.test, condition_for(*model, cfg.seed), data.world, opts);
      print_eval(report);
      if (!eval_out.empty()) write_eval_tsv(eval_out, std::span(&report, 1));
    } else if (*sw) {
      const auto cfg = resolve_config(sweep_common);
      auto [world_dir, events] = data_paths(sweep_data);
      const auto model = load_model(fs::path(sweep_model));
      if (!model->conditioned()) throw ConfigError("sweep needs a conditioned model (crm_dnn or crm_dt)");
      const auto data = load_simulation(world_dir, events, cfg.max_seq_len);
      const auto index = ItemIndex::from_checkpoint(Checkpoint::load(sweep_index));
      const auto grid = parse_grid(sweep_grid);
      auto opts = eval_options(cfg);
      const auto rows = sweep_condition(*model, index, data.split.test, grid, data.world, opts);
      write_sweep_tsv(sweep_out + ".tsv", grid, rows);
      write_sweep_svg(sweep_out + ".svg", std::string(model->variant()), grid, rows);
      std::vector<double> watch;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::cout << format_double(grid[i]) << "\t" << format_fixed(rows[i].mean_oracle_watch) << "\n";
        watch.push_back(rows[i].mean_oracle_watch);
      }
      if (grid.size() >= 2) std::cout << "spearman\t" << format_fixed(spearman(grid, watch), 4) << "\n";
    } else if (*rep) {
      const auto text = render_run_report(report_run);
      if (report_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(report_out);
        if (!f) throw DataError("cannot write '" + report_out + "'");
        f << text;
      }
    } else if (*ret) {
      const auto cfg = resolve_config(ret_common);
      auto [world_dir, events] = data_paths(ret_data);
      const auto model = load_model(fs::path(ret_model));
      const auto data = load_simulation(world_dir, events, cfg.max_seq_len);
      const auto index = ItemIndex::from_checkpoint(Checkpoint::load(ret_index));
      const UserHistory* hist = nullptr;
      for (const auto& h : data.histories) {
        if (h.user_id == ret_user) hist = &h;
      }
      if (!hist || hist->events.empty()) throw DataError("user " + std::to_string(ret_user) + " has no history");
      std::vector<ItemId> items;
      std::vector<double> watch;
      for (const auto& e : hist->events) {
        items.push_back(e.item_id);
        watch.push_back(e.watch_time);
      }
      UserQuery q{ret_user, items, watch, std::nullopt};
      if (auto spec = condition_for(*model, cfg.seed)) {
        Rng rng = derived_rng(spec->rng_seed, ret_user);
        q.condition = select_condition(*spec, watch, rng);
        std::cout << "# condition " << spec->label() << " = " << format_fixed(*q.condition, 3) << "s\n";
      }
      const auto result = index.search(model->encode_user(q), ret_k);
      std::cout << "rank\titem_id\tscore\texpected_watch\n";
      for (std::size_t i = 0; i < result.ids.size(); ++i) {
        std::cout << i + 1 << "\t" << result.ids[i] << "\t" << format_fixed(result.scores[i]) << "\t"
                  << format_fixed(expected_watch_time(data.world, ret_user, result.ids[i]), 3) << "\n";
      }
    } else if (*run) {
      const auto cfg = load_config(run_config);
      const auto dir = run_pipeline(cfg, run_out);
      std::cout << render_run_report(dir) << "\nrun directory: " << dir.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
