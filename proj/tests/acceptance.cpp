// Acceptance run: checks each of the ten release criteria and prints one
// PASS/FAIL line per criterion. Exit status is non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "crm/crm_dt.hpp"
#include "crm/harness/pipeline.hpp"
#include "crm/harness/stats.hpp"
#include "crm/harness/trace.hpp"
#include "crm/policy.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"

using namespace crm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  [%2d] %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// The seeded world of criteria 5, 6 and 10: 500 users, 2000 items, 40 events each.
PipelineConfig acceptance_config() {
  PipelineConfig c;
  c.seed = 20240607;
  c.variants = {"baseline", "crm_dnn", "crm_dt"};
  c.world.n_users = 500;
  c.world.n_items = 2000;
  c.sessions.sessions_per_user = 4;
  c.sessions.session_len = 10;
  c.world.seed = c.seed;
  c.validate();
  return c;
}

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst32 = 0, worst64 = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    worst32 = std::max({worst32, gradcases::mlp<float>(seed).max_rel_error,
                        gradcases::inbatch_softmax<float>(seed).max_rel_error,
                        gradcases::causal_attention<float>(seed).max_rel_error});
    worst64 = std::max({worst64, gradcases::mlp<double>(seed).max_rel_error,
                        gradcases::inbatch_softmax<double>(seed).max_rel_error,
                        gradcases::causal_attention<double>(seed).max_rel_error});
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst32 < 1e-2 && worst64 < 1e-5 && secs < 60,
         fmt("max rel err f32 %.2e (< 1e-2), f64 %.2e (< 1e-5), %.1fs (< 60s)", worst32, worst64, secs));
}

void loss_identities() {
  double worst = 0;
  for (std::size_t b : {2u, 16u, 128u, 512u}) {
    Matrix u(b, 8, 0.3f), v(b, 8, -0.2f);
    worst = std::max(worst, std::abs(inbatch_softmax_loss(u, v, 1.0).loss - std::log(static_cast<double>(b))));
  }
  bool order_same = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto logits = oracle::random_matrix<double>(64, 64, seed, 3.0);
    BasicMatrix<double> p0, p1;
    inbatch_softmax_from_logits(logits, &p0);
    for (std::size_t i = 0; i < 64; ++i)
      for (auto& x : logits.row(i)) x += 10.0 * static_cast<double>(i) - 300.0;
    inbatch_softmax_from_logits(logits, &p1);
    for (std::size_t i = 0; i < 64 && order_same; ++i) {
      std::vector<std::size_t> a(64), b(64);
      std::iota(a.begin(), a.end(), 0);
      std::iota(b.begin(), b.end(), 0);
      std::stable_sort(a.begin(), a.end(), [&](auto x, auto y) { return p0(i, x) > p0(i, y); });
      std::stable_sort(b.begin(), b.end(), [&](auto x, auto y) { return p1(i, x) > p1(i, y); });
      order_same = a == b;
    }
  }
  report(2, "loss identities", worst <= 1e-5 && order_same,
         fmt("|loss - ln B| max %.2e (<= 1e-5); ranking after row shift %s", worst,
             order_same ? "identical" : "CHANGED"));
}

void causality() {
  DtConfig cfg;
  cfg.n_items = 2000;
  cfg.n_users = 500;
  cfg.seed = 5;
  DtModel model(cfg);
  Rng rng(17);
  std::size_t violations = 0, rows_checked = 0;
  for (int s = 0; s < 100; ++s) {
    const std::size_t n = 1 + rng() % cfg.max_seq_len;
    std::vector<double> watch(n);
    std::vector<ItemId> items(n);
    for (std::size_t i = 0; i < n; ++i) {
      watch[i] = static_cast<double>(rng() % 300000) / 1000.0;
      items[i] = static_cast<ItemId>(1 + rng() % cfg.n_items);
    }
    const auto seq = build_decision_sequence(watch, items, static_cast<double>(rng() % 300));
    const auto base = model.hidden_states(seq);
    const std::size_t pos = 1 + rng() % (seq.token_count() - 1);
    auto pert = seq;
    if (pos % 2 == 1) {
      pert.items[(pos - 1) / 2] = pert.items[(pos - 1) / 2] % cfg.n_items + 1;
    } else {
      pert.watch_to_go[pos / 2] += 1000.0;
    }
    const auto out = model.hidden_states(pert);
    for (std::size_t r = 0; r < pos; ++r) {
      ++rows_checked;
      for (std::size_t c = 0; c < base.cols(); ++c) violations += base(r, c) != out(r, c);
    }
  }
  report(3, "causality", violations == 0,
         fmt("100 sequences, %zu prefix rows compared, %zu differing values", rows_checked, violations));
}

void watch_to_go_identity(const SimulationData& data) {
  std::size_t sequences = 0, mismatches = 0;
  for (const auto& h : data.histories) {
    std::vector<double> watch;
    std::vector<ItemId> items;
    for (const auto& e : h.events) {
      watch.push_back(e.watch_time);
      items.push_back(e.item_id);
      const auto seq = build_decision_sequence(watch, items, e.watch_time);
      for (std::size_t i = 0; i < items.size(); ++i) mismatches += seq.watch_to_go[i] - seq.watch_to_go[i + 1] != watch[i];
      ++sequences;
    }
  }
  report(4, "watch-time-to-go identity", mismatches == 0,
         fmt("%zu sequences, %zu inexact reconstructions", sequences, mismatches));
}

void learning_sanity(const PipelineConfig& cfg, const SimulationData& data) {
  const auto t0 = Clock::now();
  const auto trained = train_stage(cfg, "baseline", data.split.train);
  const double secs = seconds_since(t0);
  const auto index = index_stage(cfg, *trained.model);
  const auto rep = evaluate(*trained.model, index, data.split.test, std::nullopt, data.world, eval_options(cfg));
  const double hr = rep.hit_rate_at(50), bar = 5.0 * 50.0 / static_cast<double>(cfg.world.n_items);
  report(5, "learning sanity", hr >= bar && secs < 600,
         fmt("baseline HitRate@50 %.4f (>= %.4f), random %.4f, train %.1fs (< 600s)", hr, bar,
             50.0 / static_cast<double>(cfg.world.n_items), secs));
}

void conditioning_effect(const PipelineConfig& cfg, const SimulationData& data) {
  bool ok = true;
  std::string detail;
  for (const std::string variant : {"crm_dnn", "crm_dt"}) {
    const auto t0 = Clock::now();
    const auto trained = train_stage(cfg, variant, data.split.train);
    const double train_secs = seconds_since(t0);
    const auto index = index_stage(cfg, *trained.model);
    const auto opts = eval_options(cfg);
    const auto avg = evaluate(*trained.model, index, data.split.test, ConditionSpec::average(cfg.window), data.world, opts);
    const auto mx = evaluate(*trained.model, index, data.split.test, ConditionSpec::maximum(cfg.window), data.world, opts);
    const auto sweep = sweep_condition(*trained.model, index, data.split.test, cfg.sweep_grid, data.world, opts);
    const auto s = summarize_conditioning(variant, mx, avg, cfg.sweep_grid, sweep);
    const bool v_ok = s.n_users >= 500 && s.mean_diff > 0 && s.p_greater < 0.01 && s.sweep_spearman > 0.8;
    ok = ok && v_ok;
    detail += fmt("%s%s: watch max %.1fs vs avg %.1fs, n=%zu, p=%.1e (< 0.01), spearman %.3f (> 0.8), train %.0fs",
                  detail.empty() ? "" : "; ", variant.c_str(), s.mean_watch_max, s.mean_watch_avg, s.n_users,
                  s.p_greater, s.sweep_spearman, train_secs);
  }
  report(6, "conditioning effect", ok, detail);
}

void algorithm_fidelity() {
  Rng rng(3);
  std::size_t window_errors = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t len = 1 + rng() % 80, n = 1 + rng() % 40;
    std::vector<double> w(len);
    for (auto& x : w) x = static_cast<double>(rng() % 100000) / 100.0;
    const std::size_t take = std::min(n, len);
    double sum = 0, mx = -1;
    for (std::size_t i = len - take; i < len; ++i) {
      sum += w[i];
      mx = std::max(mx, w[i]);
    }
    Rng unused(0);
    window_errors += select_condition(ConditionSpec::maximum(n), w, unused) != mx;
    window_errors += std::abs(select_condition(ConditionSpec::average(n), w, unused) - sum / static_cast<double>(take)) >
                     1e-9 * std::max(1.0, sum);
  }
  bool freq_ok = true;
  std::string freq;
  const std::vector<double> hist = {5, 1, 9, 2};  // avg 4.25, max 9
  for (double p : {0.1, 0.3, 0.7}) {
    Rng r(1000 + static_cast<std::uint64_t>(p * 10));
    const auto spec = ConditionSpec::multiplexed(p);
    const int n = 100000;
    int picked_max = 0;
    for (int i = 0; i < n; ++i) picked_max += select_condition(spec, hist, r) == 9.0;
    const double z = (picked_max - n * p) / std::sqrt(n * p * (1 - p));
    freq_ok = freq_ok && std::abs(z) <= 3.0;
    freq += fmt(" p=%.1f:%.4f(z=%+.2f)", p, picked_max / double(n), z);
  }
  report(7, "condition policy fidelity", window_errors == 0 && freq_ok,
         fmt("2000 windows, %zu avg/max errors; mux freq%s", window_errors, freq.c_str()));
}

void retrieval_correctness() {
  std::size_t exact_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const std::size_t n = 250 * (seed + 1);
    const auto vecs = oracle::random_matrix<float>(n, 32, 50 + seed);
    const auto index = build_index(vecs, {}, seed);
    const auto queries = oracle::random_matrix<float>(100, 32, 60 + seed);
    for (std::size_t q = 0; q < 100; ++q) exact_mismatch += index.search(queries.row(q), 100).ids != oracle::topk(vecs, queries.row(q), 100);
  }

  // 10k items drawn from a 64-component Gaussian mixture, queries from the
  // same mixture: the clustered regime IVF is built for.
  const std::size_t n_items = 10000, dim = 32, comps = 64;
  const auto centers = oracle::random_matrix<float>(comps, dim, 70, 1.0);
  Rng rng(71);
  std::normal_distribution<double> noise(0.0, 0.35);
  auto draw = [&](std::size_t rows) {
    Matrix m(rows, dim);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t c = rng() % comps;
      for (std::size_t j = 0; j < dim; ++j) m(r, j) = centers(c, j) + static_cast<float>(noise(rng));
    }
    return l2_normalize_rows(m);
  };
  const auto items = draw(n_items);
  const auto queries = draw(100);
  IndexConfig ivf_cfg{IndexKind::ivf, 64, 8, 20};
  const auto ivf = build_index(items, ivf_cfg, 72);
  const auto exact = build_index(items, {}, 72);
  double recall = 0;
  std::size_t full_probe_mismatch = 0;
  for (std::size_t q = 0; q < 100; ++q) {
    const auto e = exact.search(queries.row(q), 100);
    recall += recall_at_k(ivf.search(queries.row(q), 100), e);
    const auto full = ivf.search(queries.row(q), 100, 64);
    full_probe_mismatch += full.ids != e.ids || full.scores != e.scores;
  }
  recall /= 100;
  report(8, "retrieval correctness", exact_mismatch == 0 && recall >= 0.95 && full_probe_mismatch == 0,
         fmt("exact vs oracle %zu/400 mismatches; IVF recall@100 %.4f (>= 0.95); full probe %zu/100 mismatches",
             exact_mismatch, recall, full_probe_mismatch));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void reproducibility() {
  PipelineConfig cfg;
  cfg.seed = 99;
  cfg.world.seed = 99;
  cfg.variants = {"baseline", "crm_dnn", "crm_dt"};
  cfg.world.n_users = 120;
  cfg.world.n_items = 400;
  cfg.sessions.sessions_per_user = 2;
  cfg.epochs = 2;
  cfg.dt_epochs = 1;
  cfg.max_seq_len = 16;
  cfg.index = "ivf";
  cfg.n_clusters = 16;
  cfg.n_probe = 4;
  const auto root = fs::temp_directory_path() / "crm_acceptance_repro";
  fs::remove_all(root);
  run_pipeline_in(cfg, root / "a");
  run_pipeline_in(cfg, root / "b");
  std::size_t tables = 0, differing = 0;
  for (const auto& name : report_table_names(cfg)) {
    ++tables;
    const auto a = slurp(root / "a" / name), b = slurp(root / "b" / name);
    differing += a.empty() || a != b;
  }
  fs::remove_all(root);
  report(9, "reproducibility", differing == 0, fmt("%zu report tables, %zu differ between reruns", tables, differing));
}

void daily_trace(const PipelineConfig& cfg, const SimulationData& data) {
  const auto rows = condition_trace(data.world, data.histories, cfg.window, cfg.trace_buckets);
  std::vector<double> mx, avg;
  std::size_t below = 0;
  for (const auto& r : rows) {
    mx.push_back(r.mean_max);
    avg.push_back(r.mean_avg);
    below += r.mean_max < r.mean_avg;
  }
  const double corr = rows.size() >= 2 ? pearson(mx, avg) : 0.0;
  report(10, "daily trace shape", !rows.empty() && below == 0 && corr > 0,
         fmt("%zu buckets, max < avg in %zu, correlation %.3f (> 0)", rows.size(), below, corr));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  try {
    gradient_correctness();
    loss_identities();
    causality();
    const auto cfg = acceptance_config();
    const auto data = simulate_stage(cfg);
    watch_to_go_identity(data);
    learning_sanity(cfg, data);
    conditioning_effect(cfg, data);
    algorithm_fidelity();
    retrieval_correctness();
    reproducibility();
    daily_trace(cfg, data);
  } catch (const std::exception& e) {
    std::printf("FAIL  acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%s: %d of 10 criteria failed (%.0fs)\n", failures ? "FAILED" : "ALL PASSED", failures, seconds_since(t0));
  return failures ? 1 : 0;
}
