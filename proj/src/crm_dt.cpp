#include "crm/crm_dt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crm/error.hpp"
#include "crm/numerics/loss.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
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

}  // namespace

DecisionSequence build_decision_sequence(std::span<const double> watch, std::span<const ItemId> items,
                                         double condition_next) {
  if (watch.size() != items.size()) throw ShapeError("decision sequence: watch times and items differ in length");
  if (items.empty()) throw DataError("decision sequence needs at least one event");
  if (!(condition_next >= 0.0)) throw DataError("decision sequence: condition must be >= 0");
  DecisionSequence seq;
  seq.items.assign(items.begin(), items.end());
  seq.watch_to_go.assign(items.size() + 1, 0.0);
  seq.watch_to_go.back() = condition_next;
  for (std::size_t i = items.size(); i-- > 0;) {
    if (!(watch[i] >= 0.0)) throw DataError("decision sequence: negative watch time at position " + std::to_string(i));
    seq.watch_to_go[i] = seq.watch_to_go[i + 1] + watch[i];
  }
  return seq;
}

DtModel::DtModel(const DtConfig& config)
    : token_items(config.n_items + 1, config.d_model),
      wtg_embeddings(config.wtg_buckets, config.d_model),
      positions(2 * config.max_seq_len + 1, config.d_model),
      transformer(config.d_model, config.n_heads, config.n_layers, config.ffn_mult * config.d_model),
      projection(with_ends(config.d_model + config.user_dim, config.proj_hidden, config.output_dim), Activation::relu),
      item_mlp(with_ends(config.share_item_embeddings ? config.d_model : config.item_dim, config.item_hidden,
                         config.output_dim),
               Activation::relu),
      config_(config) {
  if (config.n_items == 0) throw ConfigError("crm_dt model needs n_items > 0");
  if (config.user_dim > 0) {
    if (config.n_users == 0) throw ConfigError("crm_dt user features need n_users > 0");
    user_embeddings = EmbeddingTable<float>(config.n_users, config.user_dim);
  }
  if (config.share_item_embeddings) {
    if (config.item_dim != config.d_model) throw ConfigError("sharing item embeddings needs item_dim == d_model");
  } else {
    item_embeddings = EmbeddingTable<float>(config.n_items + 1, config.item_dim);
  }
  Rng rng(splitmix64(config.seed ^ 0xd7));
  token_items.init(rng, 0.1);
  wtg_embeddings.init(rng, 0.1);
  positions.init(rng, 0.02);
  transformer.init(rng);
  if (config.user_dim > 0) user_embeddings.init(rng, 0.1);
  projection.init(rng);
  if (!config.share_item_embeddings) item_embeddings.init(rng, 0.1);
  item_mlp.init(rng);
}

Matrix DtModel::embed_tokens(const DecisionSequence& seq, std::vector<std::size_t>* wtg_ids) const {
  const std::size_t n = seq.length();
  const std::size_t tokens = seq.token_count();
  if (seq.watch_to_go.size() != n + 1) throw ShapeError("decision sequence needs n + 1 watch-time-to-go values");
  if (tokens > max_tokens()) {
    throw DataError("decision sequence of " + std::to_string(tokens) + " tokens exceeds max context of " +
                    std::to_string(max_tokens()) + " tokens (max_seq_len " + std::to_string(config_.max_seq_len) + ")");
  }
  const std::size_t d = config_.d_model;
  Matrix x(tokens, d);
  if (wtg_ids) wtg_ids->assign(n + 1, 0);
  for (std::size_t t = 0; t < tokens; ++t) {
    std::span<const float> tok;
    if (t % 2 == 0) {
      const std::size_t b = log_bucket(seq.watch_to_go[t / 2], config_.wtg_buckets, config_.bucket_tau);
      if (wtg_ids) (*wtg_ids)[t / 2] = b;
      tok = wtg_embeddings.lookup(b);
    } else {
      const ItemId item = seq.items[t / 2];
      if (item == kPadItem || item > config_.n_items) throw DataError("decision sequence: invalid item id " + std::to_string(item));
      tok = token_items.lookup(item);
    }
    const auto pos = positions.lookup(t);
    auto row = x.row(t);
    for (std::size_t c = 0; c < d; ++c) row[c] = tok[c] + pos[c];
  }
  return x;
}

Matrix DtModel::hidden_states(const DecisionSequence& seq) const { return transformer.forward(embed_tokens(seq, nullptr)); }

void DtModel::fill_projection_input(std::span<const float> last_hidden, UserId user, std::span<float> out) const {
  std::copy(last_hidden.begin(), last_hidden.end(), out.begin());
  if (config_.user_dim > 0) {
    const auto ue = user_embeddings.lookup(user);
    std::copy(ue.begin(), ue.end(), out.begin() + static_cast<std::ptrdiff_t>(config_.d_model));
  }
}

std::vector<float> DtModel::user_forward(const DecisionSequence& seq, UserId user) const {
  const Matrix h = hidden_states(seq);
  Matrix z(1, config_.d_model + config_.user_dim);
  fill_projection_input(h.row(h.rows() - 1), user, z.row(0));
  const Matrix u = l2_normalize_rows(projection.forward(z));
  return {u.row(0).begin(), u.row(0).end()};
}

std::vector<float> DtModel::item_forward(ItemId item) const {
  if (item > config_.n_items) throw DataError("item id " + std::to_string(item) + " out of range");
  const ItemId ids[] = {item};
  const Matrix v = item_tower_forward(item_table(), item_mlp, ids);
  return {v.row(0).begin(), v.row(0).end()};
}

std::vector<float> DtModel::encode_user(const UserQuery& query) const {
  if (query.items.size() != query.watch.size()) throw ShapeError("user history: items and watch times differ in length");
  std::vector<ItemId> items;
  std::vector<double> watch;
  for (std::size_t j = 0; j < query.items.size(); ++j) {
    if (query.items[j] == kPadItem) continue;
    items.push_back(query.items[j]);
    watch.push_back(query.watch[j]);
  }
  if (items.empty()) throw DataError("crm_dt: history has no real items");
  const std::size_t keep = std::min(items.size(), config_.max_seq_len);
  const std::size_t skip = items.size() - keep;
  const auto seq = build_decision_sequence(std::span(watch).subspan(skip), std::span(items).subspan(skip),
                                           query.condition.value_or(0.0));
  return user_forward(seq, query.user_id);
}

Matrix DtModel::item_vectors() const {
  std::vector<ItemId> ids(config_.n_items);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<ItemId>(i + 1);
  return item_tower_forward(item_table(), item_mlp, ids);
}

ParamList<float> DtModel::params() {
  ParamList<float> p;
  token_items.collect(p, "token_items");
  wtg_embeddings.collect(p, "wtg_embeddings");
  positions.collect(p, "positions");
  transformer.collect(p, "transformer");
  if (config_.user_dim > 0) user_embeddings.collect(p, "user_embeddings");
  projection.collect(p, "projection");
  if (!config_.share_item_embeddings) item_embeddings.collect(p, "item_embeddings");
  item_mlp.collect(p, "item_mlp");
  return p;
}

Checkpoint DtModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["variant"] = "crm_dt";
  ckpt.meta["n_items"] = std::to_string(config_.n_items);
  ckpt.meta["n_users"] = std::to_string(config_.n_users);
  ckpt.meta["d_model"] = std::to_string(config_.d_model);
  ckpt.meta["n_layers"] = std::to_string(config_.n_layers);
  ckpt.meta["n_heads"] = std::to_string(config_.n_heads);
  ckpt.meta["ffn_mult"] = std::to_string(config_.ffn_mult);
  ckpt.meta["max_seq_len"] = std::to_string(config_.max_seq_len);
  ckpt.meta["wtg_buckets"] = std::to_string(config_.wtg_buckets);
  ckpt.meta["bucket_tau"] = format_double(config_.bucket_tau);
  ckpt.meta["user_dim"] = std::to_string(config_.user_dim);
  ckpt.meta["proj_hidden"] = join_dims(config_.proj_hidden);
  ckpt.meta["output_dim"] = std::to_string(config_.output_dim);
  ckpt.meta["item_dim"] = std::to_string(config_.item_dim);
  ckpt.meta["item_hidden"] = join_dims(config_.item_hidden);
  ckpt.meta["share_item_embeddings"] = config_.share_item_embeddings ? "1" : "0";
  ckpt.meta["seed"] = std::to_string(config_.seed);
  store_params(ckpt, const_cast<DtModel*>(this)->params());
  return ckpt;
}

DtModel DtModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta_value("variant") != "crm_dt") throw DataError("checkpoint is not a crm_dt model");
  auto count = [&](const std::string& k) {
    auto v = parse_u64(ckpt.meta_value(k));
    if (!v) throw DataError("checkpoint metadata '" + k + "' is not an unsigned integer");
    return static_cast<std::size_t>(*v);
  };
  DtConfig c;
  c.n_items = count("n_items");
  c.n_users = count("n_users");
  c.d_model = count("d_model");
  c.n_layers = count("n_layers");
  c.n_heads = count("n_heads");
  c.ffn_mult = count("ffn_mult");
  c.max_seq_len = count("max_seq_len");
  c.wtg_buckets = count("wtg_buckets");
  auto tau = parse_double(ckpt.meta_value("bucket_tau"));
  if (!tau) throw DataError("checkpoint metadata 'bucket_tau' is not a number");
  c.bucket_tau = *tau;
  c.user_dim = count("user_dim");
  c.proj_hidden = parse_dims(ckpt.meta_value("proj_hidden"));
  c.output_dim = count("output_dim");
  c.item_dim = count("item_dim");
  c.item_hidden = parse_dims(ckpt.meta_value("item_hidden"));
  c.share_item_embeddings = ckpt.meta_value("share_item_embeddings") == "1";
  c.seed = count("seed");
  DtModel m(c);
  load_params(ckpt, m.params());
  return m;
}

double DtModel::batch_loss(const Batch& batch, double temperature, bool backward) {
  const std::size_t b = batch.size();
  const std::size_t d = config_.d_model;
  std::vector<SeqCache> caches(b);
  Matrix z(b, d + config_.user_dim);
  for (std::size_t i = 0; i < b; ++i) {
    auto& c = caches[i];
    c.seq = build_decision_sequence(batch.history_watch(i), batch.history_items(i), batch.target_watch[i]);
    const Matrix x = embed_tokens(c.seq, &c.wtg_ids);
    const Matrix h = transformer.forward(x, backward ? &c.transformer : nullptr);
    fill_projection_input(h.row(h.rows() - 1), batch.users[i], z.row(i));
  }
  typename Mlp<float>::Cache proj_cache;
  std::vector<double> norms;
  const Matrix users = l2_normalize_rows(projection.forward(z, backward ? &proj_cache : nullptr), &norms);
  ItemTowerCache item_cache;
  const Matrix items = item_tower_forward(item_table(), item_mlp, batch.targets, backward ? &item_cache : nullptr);
  const auto result = inbatch_softmax_loss(users, items, temperature);
  if (!backward) return result.loss;

  const Matrix dz = projection.backward(l2_normalize_rows_backward(users, norms, result.grad_user), proj_cache);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& c = caches[i];
    const std::size_t tokens = c.seq.token_count();
    Matrix dh(tokens, d);
    const auto g = dz.row(i);
    std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(d), dh.row(tokens - 1).begin());
    if (config_.user_dim > 0) user_embeddings.accumulate(batch.users[i], g.subspan(d, config_.user_dim));
    const Matrix dx = transformer.backward(dh, c.transformer);
    for (std::size_t t = 0; t < tokens; ++t) {
      positions.accumulate(t, dx.row(t));
      if (t % 2 == 0) {
        wtg_embeddings.accumulate(c.wtg_ids[t / 2], dx.row(t));
      } else {
        token_items.accumulate(c.seq.items[t / 2], dx.row(t));
      }
    }
  }
  item_tower_backward(item_table(), item_mlp, result.grad_item, item_cache);
  return result.loss;
}

TrainTrace dt_train(DtModel& model, std::span<const TrainExample> examples, const TrainOptions& options) {
  return run_training_loop(model.params(), examples, options,
                           [&](const Batch& batch) { return model.batch_loss(batch, options.temperature, true); });
}

}  // namespace crm
