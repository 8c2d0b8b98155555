#include "crm/towers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "crm/error.hpp"
#include "crm/numerics/loss.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {

std::vector<std::size_t> tower_dims(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

std::string join_dims(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  for (auto part : split(s, ',')) {
    auto v = parse_u64(part);
    if (!v) throw DataError("malformed layer list '" + s + "'");
    out.push_back(*v);
  }
  return out;
}

std::size_t meta_count(const Checkpoint& ckpt, const std::string& key) {
  auto v = parse_u64(ckpt.meta_value(key));
  if (!v) throw DataError("checkpoint metadata '" + key + "' is not an unsigned integer");
  return *v;
}

double meta_double(const Checkpoint& ckpt, const std::string& key) {
  auto v = parse_double(ckpt.meta_value(key));
  if (!v) throw DataError("checkpoint metadata '" + key + "' is not a number");
  return *v;
}

}  // namespace

TwoTowerModel::TwoTowerModel(const TwoTowerConfig& config)
    : item_embeddings(config.n_items + 1, config.item_dim),
      watch_embeddings(config.n_buckets, config.watch_dim),
      condition_embeddings(config.n_buckets, config.condition_dim),
      user_mlp(tower_dims(config.item_dim + config.watch_dim + config.condition_dim, config.user_hidden,
                          config.output_dim),
               Activation::relu),
      item_mlp(tower_dims(config.item_dim, config.item_hidden, config.output_dim), Activation::relu),
      config_(config) {
  if (config.n_items == 0) throw ConfigError("two-tower model needs n_items > 0");
  Rng rng(splitmix64(config.seed));
  item_embeddings.init(rng, 0.1);
  watch_embeddings.init(rng, 0.1);
  condition_embeddings.init(rng, 0.1);
  user_mlp.init(rng);
  item_mlp.init(rng);
}

std::size_t TwoTowerModel::user_features(std::span<const ItemId> items, std::span<const double> watch,
                                         std::optional<ConditionFeature> condition, std::span<float> out) const {
  if (items.size() != watch.size()) throw ShapeError("user history: items and watch times differ in length");
  std::fill(out.begin(), out.end(), 0.0f);
  const std::size_t id = config_.item_dim, wd = config_.watch_dim;
  std::size_t n = 0;
  std::vector<double> acc(id + wd, 0.0);
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (items[j] == kPadItem) continue;
    ++n;
    const auto e = item_embeddings.lookup(items[j]);
    for (std::size_t c = 0; c < id; ++c) acc[c] += e[c];
    const auto w = watch_embeddings.lookup(log_bucket(watch[j], config_.n_buckets, config_.bucket_tau));
    for (std::size_t c = 0; c < wd; ++c) acc[id + c] += w[c];
  }
  if (n == 0) throw DataError("user tower: history has no real items");
  for (std::size_t c = 0; c < id + wd; ++c) out[c] = static_cast<float>(acc[c] / static_cast<double>(n));
  if (condition) {
    const auto ce = condition_embeddings.lookup(std::min(condition->bucket_id, config_.n_buckets - 1));
    std::copy(ce.begin(), ce.end(), out.begin() + static_cast<std::ptrdiff_t>(id + wd));
  }
  return n;
}

std::vector<float> TwoTowerModel::user_forward(std::span<const ItemId> items, std::span<const double> watch,
                                               std::optional<ConditionFeature> condition) const {
  Matrix f(1, user_input_dim());
  user_features(items, watch, condition, f.row(0));
  const Matrix u = l2_normalize_rows(user_mlp.forward(f));
  return {u.row(0).begin(), u.row(0).end()};
}

std::vector<float> TwoTowerModel::item_forward(ItemId item) const {
  if (item > config_.n_items) throw DataError("item id " + std::to_string(item) + " out of range");
  const ItemId ids[] = {item};
  const Matrix v = item_tower_forward(item_embeddings, item_mlp, ids);
  return {v.row(0).begin(), v.row(0).end()};
}

std::vector<float> TwoTowerModel::encode_user(const UserQuery& query) const {
  std::optional<ConditionFeature> cond;
  if (query.condition && config_.conditioned) cond = make_condition(*query.condition, config_.n_buckets, config_.bucket_tau);
  return user_forward(query.items, query.watch, cond);
}

Matrix TwoTowerModel::item_vectors() const {
  std::vector<ItemId> ids(config_.n_items);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<ItemId>(i + 1);
  return item_tower_forward(item_embeddings, item_mlp, ids);
}

ParamList<float> TwoTowerModel::params() {
  ParamList<float> p;
  item_embeddings.collect(p, "item_embeddings");
  watch_embeddings.collect(p, "watch_embeddings");
  condition_embeddings.collect(p, "condition_embeddings");
  user_mlp.collect(p, "user_mlp");
  item_mlp.collect(p, "item_mlp");
  return p;
}

Checkpoint TwoTowerModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["variant"] = std::string(variant());
  ckpt.meta["n_items"] = std::to_string(config_.n_items);
  ckpt.meta["item_dim"] = std::to_string(config_.item_dim);
  ckpt.meta["watch_dim"] = std::to_string(config_.watch_dim);
  ckpt.meta["condition_dim"] = std::to_string(config_.condition_dim);
  ckpt.meta["user_hidden"] = join_dims(config_.user_hidden);
  ckpt.meta["item_hidden"] = join_dims(config_.item_hidden);
  ckpt.meta["output_dim"] = std::to_string(config_.output_dim);
  ckpt.meta["n_buckets"] = std::to_string(config_.n_buckets);
  ckpt.meta["bucket_tau"] = format_double(config_.bucket_tau);
  ckpt.meta["seed"] = std::to_string(config_.seed);
  store_params(ckpt, const_cast<TwoTowerModel*>(this)->params());
  return ckpt;
}

TwoTowerModel TwoTowerModel::from_checkpoint(const Checkpoint& ckpt) {
  const std::string& variant = ckpt.meta_value("variant");
  if (variant != "baseline" && variant != "crm_dnn") throw DataError("checkpoint variant '" + variant + "' is not a two-tower model");
  TwoTowerConfig c;
  c.conditioned = variant == "crm_dnn";
  c.n_items = meta_count(ckpt, "n_items");
  c.item_dim = meta_count(ckpt, "item_dim");
  c.watch_dim = meta_count(ckpt, "watch_dim");
  c.condition_dim = meta_count(ckpt, "condition_dim");
  c.user_hidden = parse_dims(ckpt.meta_value("user_hidden"));
  c.item_hidden = parse_dims(ckpt.meta_value("item_hidden"));
  c.output_dim = meta_count(ckpt, "output_dim");
  c.n_buckets = meta_count(ckpt, "n_buckets");
  c.bucket_tau = meta_double(ckpt, "bucket_tau");
  c.seed = meta_count(ckpt, "seed");
  TwoTowerModel m(c);
  load_params(ckpt, m.params());
  return m;
}

double TwoTowerModel::batch_loss(const Batch& batch, ConditionMode mode, double temperature, bool backward) {
  const std::size_t b = batch.size();
  const std::size_t id = config_.item_dim, wd = config_.watch_dim, cd = config_.condition_dim;
  Matrix features(b, user_input_dim());
  std::vector<std::optional<ConditionFeature>> conds(b);
  std::vector<std::size_t> counts(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (mode == ConditionMode::teacher_forced) {
      conds[i] = make_condition(batch.target_watch[i], config_.n_buckets, config_.bucket_tau);
    }
    counts[i] = user_features(batch.history_items(i), batch.history_watch(i), conds[i], features.row(i));
  }

  typename Mlp<float>::Cache user_cache;
  std::vector<double> user_norms;
  const Matrix users = l2_normalize_rows(user_mlp.forward(features, backward ? &user_cache : nullptr), &user_norms);
  ItemTowerCache item_cache;
  const Matrix items = item_tower_forward(item_embeddings, item_mlp, batch.targets, backward ? &item_cache : nullptr);
  const auto result = inbatch_softmax_loss(users, items, temperature);
  if (!backward) return result.loss;

  const Matrix dfeat = user_mlp.backward(l2_normalize_rows_backward(users, user_norms, result.grad_user), user_cache);
  for (std::size_t i = 0; i < b; ++i) {
    const auto g = dfeat.row(i);
    const float inv_n = 1.0f / static_cast<float>(counts[i]);
    const auto hist_items = batch.history_items(i);
    const auto hist_watch = batch.history_watch(i);
    for (std::size_t j = 0; j < hist_items.size(); ++j) {
      if (hist_items[j] == kPadItem) continue;
      item_embeddings.accumulate(hist_items[j], g.subspan(0, id), inv_n);
      watch_embeddings.accumulate(log_bucket(hist_watch[j], config_.n_buckets, config_.bucket_tau), g.subspan(id, wd),
                                  inv_n);
    }
    if (conds[i]) condition_embeddings.accumulate(conds[i]->bucket_id, g.subspan(id + wd, cd));
  }
  item_tower_backward(item_embeddings, item_mlp, result.grad_item, item_cache);
  return result.loss;
}

TrainTrace run_training_loop(const ParamList<float>& params, std::span<const TrainExample> examples,
                             const TrainOptions& options, const std::function<double(const Batch&)>& batch_loss) {
  zero_grads(params);
  Optimizer opt(options.optimizer, params);
  TrainTrace trace;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto epoch_batches =
        make_batches(examples, {options.batch_size, options.window, splitmix64(options.seed) + epoch, 0});
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t bi = 0; bi < epoch_batches.batches.size(); ++bi) {
      if (options.max_steps && trace.steps >= options.max_steps) break;
      double loss = 0.0;
      try {
        loss = batch_loss(epoch_batches.batches[bi]);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) + ")");
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
      }
      opt.step();
      trace.step_loss.push_back(loss);
      ++trace.steps;
      sum += loss;
      ++n;
    }
    if (n == 0) break;
    trace.epoch_loss.push_back(sum / static_cast<double>(n));
  }
  return trace;
}

TrainTrace train(TwoTowerModel& model, std::span<const TrainExample> examples, const TrainOptions& options,
                 ConditionMode mode) {
  return run_training_loop(model.params(), examples, options, [&](const Batch& batch) {
    return model.batch_loss(batch, mode, options.temperature, true);
  });
}

}  // namespace crm
