#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "hilomix/error.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/io.hpp"
#include "hilomix/model/dual_gnn.hpp"
#include "hilomix/numerics/adam.hpp"
#include "hilomix/objectives/losses.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::train {

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 128;
  std::size_t anchors = 128;
  double learning_rate = 0.003;
  double tau = 0.5;
  double lambda = 2.0;
  double negative_ratio = 1.0;
  double clamp_eps = obj::kClampEps;
  double clip_norm = 5.0;
  std::uint64_t seed = 7;
  model::ModelConfig model;

  bool label_division = true;          // false: every label clean, weight 1
  bool literal_mutual_loss = false;
  bool use_transaction_edges = true;
  bool freeze_scorer = false;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (anchors < 2) throw ConfigError("anchors must be >= 2");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(tau > 0)) throw ConfigError("tau must be positive");
    if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
    if (!(negative_ratio >= 0)) throw ConfigError("negative_ratio must be >= 0");
    if (!(clamp_eps > 0 && clamp_eps < 1)) throw ConfigError("clamp_eps must lie in (0, 1)");
    if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
    model.branch.validate();
  }
};

struct EpochLog {
  int epoch = 0;
  std::size_t clean = 0, flipped = 0, remaining = 0;
  double loss_threshold = 0, loss_mean = 0, percentile_param = 1;
  double l_con = 0, l_sup = 0, total = 0;
  double clean_fraction = 0;
  std::size_t clamped = 0;
  std::size_t steps = 0;
  double seconds = 0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"epoch", epoch},         {"clean", clean},
            {"flipped", flipped},     {"remaining", remaining},
            {"loss_threshold", loss_threshold}, {"loss_mean", loss_mean},
            {"percentile_param", percentile_param},
            {"l_con", l_con},         {"l_sup", l_sup},
            {"total", total},         {"clean_fraction", clean_fraction},
            {"clamped", clamped},     {"steps", steps},
            {"seconds", seconds}};
  }
};

/// `k` distinct account pairs, none of which carries an association label.
inline std::vector<graph::LabeledPair> sample_negatives(const graph::Hamig& g, std::size_t k, Rng& rng) {
  if (k == 0) return {};
  const std::uint64_t na = g.n_accounts();
  std::unordered_set<std::uint64_t> taken;
  for (const auto& p : g.associations) taken.insert(graph::pair_key(p.a, p.b));
  const std::uint64_t total = na < 2 ? 0 : na * (na - 1) / 2;
  const std::uint64_t available = total - std::min<std::uint64_t>(total, taken.size());
  if (k > available) {
    throw ConfigError("sample_negatives: " + std::to_string(k) + " negatives requested, " +
                      std::to_string(available) + " unlabeled pairs exist");
  }
  std::vector<graph::LabeledPair> out;
  out.reserve(k);
  if (2 * k > available) {
    // Dense request: enumerate and draw without replacement.
    std::vector<graph::LabeledPair> pool;
    for (std::uint32_t a = 0; a < na; ++a)
      for (std::uint32_t b = a + 1; b < na; ++b)
        if (!taken.contains(graph::pair_key(a, b))) pool.push_back({a, b, 0});
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      out.push_back(pool[i]);
    }
    return out;
  }
  while (out.size() < k) {
    auto a = static_cast<std::uint32_t>(uniform_index(rng, na));
    auto b = static_cast<std::uint32_t>(uniform_index(rng, na));
    if (a == b) continue;
    const auto [u, v] = graph::canonical(a, b);
    if (!taken.insert(graph::pair_key(u, v)).second) continue;
    out.push_back({u, v, 0});
  }
  return out;
}

/// Deduplicated endpoints of `pairs` in order of first appearance, at most `cap`.
inline std::vector<std::uint32_t> batch_anchors(std::span<const graph::LabeledPair> pairs, std::size_t cap) {
  std::vector<std::uint32_t> out;
  std::unordered_set<std::uint32_t> seen;
  for (const auto& p : pairs) {
    for (std::uint32_t v : {p.a, p.b}) {
      if (out.size() == cap) return out;
      if (seen.insert(v).second) out.push_back(v);
    }
  }
  return out;
}

struct BatchLoss {
  Var l_con, l_sup, total;
};

/// The full objective for one batch of labeled pairs.
inline BatchLoss batch_objective(Tape& t, model::ModelParams& p, const model::GraphContext& ctx,
                                 std::span<const graph::LabeledPair> pairs,
                                 std::span<const int> target, std::span<const double> weight,
                                 const TrainConfig& cfg) {
  const model::Forward f = model::forward(t, p, ctx);
  const auto anchors = batch_anchors(pairs, cfg.anchors);
  BatchLoss out;
  if (anchors.size() >= 2) {
    out.l_con = obj::contrastive_loss(ad::gather_rows(f.lf, anchors), ad::gather_rows(f.hf, anchors), cfg.tau);
  } else {
    out.l_con = t.constant(Matrix::scalar(0.0));
  }
  const auto idx = model::pair_index(pairs, ctx.n_accounts);
  Var lp_lf = model::head_log_probs(f.lf, t.parameter(p.head_lf_w), t.parameter(p.head_lf_b), idx);
  Var lp_hf = model::head_log_probs(f.hf, t.parameter(p.head_hf_w), t.parameter(p.head_hf_b), idx);
  out.l_sup = obj::supervision_loss(lp_lf, lp_hf, target, weight, cfg.clamp_eps);
  out.total = obj::total_loss(out.l_con, out.l_sup, cfg.lambda);
  return out;
}

/// Head probabilities of both branches over `pairs` under the current parameters.
struct HeadProbs {
  Matrix lf, hf;
};

inline HeadProbs predict_pairs(model::ModelParams& p, const model::Embeddings& emb,
                               std::span<const graph::LabeledPair> pairs, std::size_t n_accounts) {
  const auto idx = model::pair_index(pairs, n_accounts);
  return {model::head_probs(emb.lf, p.head_lf_w, p.head_lf_b, idx),
          model::head_probs(emb.hf, p.head_hf_w, p.head_hf_b, idx)};
}

/// Everything known about one epoch's label population at its start.
struct EpochSnapshot {
  int epoch = 0;
  std::vector<graph::LabeledPair> pairs;  // label = observed y
  std::vector<double> l_mul;
  std::size_t clamped = 0;  // probabilities floored at clamp_eps
  Matrix p_lf, p_hf;
  obj::LabelPartition partition;
};

inline std::vector<int> labels_of(std::span<const graph::LabeledPair> pairs) {
  std::vector<int> y;
  y.reserve(pairs.size());
  for (const auto& p : pairs) y.push_back(p.label);
  return y;
}

inline EpochSnapshot partition_epoch(model::ModelParams& p, const model::GraphContext& ctx,
                                     std::vector<graph::LabeledPair> pairs, int t,
                                     const TrainConfig& cfg) {
  EpochSnapshot s;
  s.epoch = t;
  s.pairs = std::move(pairs);
  const auto emb = model::evaluate(p, ctx);
  auto probs = predict_pairs(p, emb, s.pairs, ctx.n_accounts);
  s.p_lf = std::move(probs.lf);
  s.p_hf = std::move(probs.hf);
  const auto y = labels_of(s.pairs);
  auto ml = obj::mutual_loss(s.p_lf, s.p_hf, y, cfg.literal_mutual_loss, cfg.clamp_eps);
  s.l_mul = std::move(ml.values);
  s.clamped = ml.clamped;
  if (cfg.label_division) {
    s.partition = obj::partition_labels(s.l_mul, s.p_lf, s.p_hf, y, t, cfg.epochs);
  } else {
    s.partition = obj::all_clean(y, t);
  }
  return s;
}

/// CSV dump of one epoch partition: edge,a,b,set,l_mul,mu,y,y_hat
inline std::string partition_csv(const EpochSnapshot& s) {
  std::string out = "edge,a,b,set,l_mul,mu,y,y_hat\n";
  for (std::size_t e = 0; e < s.pairs.size(); ++e) {
    out += std::to_string(e) + "," + std::to_string(s.pairs[e].a) + "," + std::to_string(s.pairs[e].b) +
           "," + obj::label_set_name(s.partition.set[e]) + "," + io::format_double(s.l_mul[e]) + "," +
           io::format_double(s.partition.mu[e]) + "," + std::to_string(s.pairs[e].label) + "," +
           std::to_string(s.partition.target[e]) + "\n";
  }
  return out;
}

struct TrainState {
  model::ModelParams params;
  AdamState adam;
  Rng rng;
};

inline TrainState init_state(const TrainConfig& cfg) {
  return {model::ModelParams::initialize(cfg.model, cfg.seed), AdamState(AdamConfig{cfg.learning_rate}),
          make_rng(cfg.seed, 0x7a11)};
}

/// Labeled training multiset for one epoch: the given pairs plus fresh negatives.
inline std::vector<graph::LabeledPair> epoch_pairs(const graph::Hamig& g,
                                                   std::span<const graph::LabeledPair> train,
                                                   const TrainConfig& cfg, Rng& rng) {
  std::size_t pos = 0;
  for (const auto& p : train) pos += p.label == 1;
  const auto k = static_cast<std::size_t>(std::llround(cfg.negative_ratio * static_cast<double>(pos)));
  std::vector<graph::LabeledPair> all(train.begin(), train.end());
  for (const auto& n : sample_negatives(g, k, rng)) all.push_back(n);
  return all;
}

inline std::vector<Parameter*> trainable(model::ModelParams& p, const TrainConfig& cfg) {
  std::vector<Parameter*> out;
  for (Parameter* q : p.parameters()) {
    if (cfg.freeze_scorer && (q == &p.scorer_w || q == &p.scorer_b)) continue;
    out.push_back(q);
  }
  return out;
}

/// One pass over the shuffled multiset of `snap`.
inline EpochLog train_epoch(TrainState& st, const model::GraphContext& ctx, const EpochSnapshot& snap,
                            const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto& part = snap.partition;
  EpochLog log;
  log.epoch = snap.epoch;
  log.clean = part.count(obj::LabelSet::clean);
  log.flipped = part.count(obj::LabelSet::flipped);
  log.remaining = part.count(obj::LabelSet::remaining);
  log.loss_threshold = part.loss_threshold;
  log.loss_mean = part.loss_mean;
  log.percentile_param = part.percentile_param;
  log.clean_fraction = part.size() ? static_cast<double>(log.clean) / static_cast<double>(part.size()) : 0.0;
  log.clamped = snap.clamped;

  std::vector<std::size_t> order(snap.pairs.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::shuffle(order.begin(), order.end(), st.rng);

  auto params = trainable(st.params, cfg);
  std::vector<Parameter*> frozen;
  for (Parameter* q : st.params.parameters())
    if (std::find(params.begin(), params.end(), q) == params.end()) frozen.push_back(q);

  for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
    const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
    std::vector<graph::LabeledPair> pairs;
    std::vector<int> target;
    std::vector<double> weight;
    for (std::size_t k = b0; k < b1; ++k) {
      pairs.push_back(snap.pairs[order[k]]);
      target.push_back(part.target[order[k]]);
      weight.push_back(part.weight[order[k]]);
    }
    Tape t;
    for (Parameter* q : frozen) t.freeze(*q);
    const BatchLoss loss = batch_objective(t, st.params, ctx, pairs, target, weight, cfg);
    const double total = loss.total.value().scalar_value();
    if (!std::isfinite(total)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(snap.epoch) + ", batch " +
                           std::to_string(b0 / cfg.batch_size) + ": L_con=" +
                           io::format_double(loss.l_con.value().scalar_value()) +
                           " L_sup=" + io::format_double(loss.l_sup.value().scalar_value()));
    }
    t.backward(loss.total);
    clip_grad_norm(params, cfg.clip_norm);
    st.adam.step(params);
    log.l_con += loss.l_con.value().scalar_value();
    log.l_sup += loss.l_sup.value().scalar_value();
    log.total += total;
    ++log.steps;
  }
  if (log.steps) {
    const auto n = static_cast<double>(log.steps);
    log.l_con /= n;
    log.l_sup /= n;
    log.total /= n;
  }
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

struct TrainResult {
  model::ModelParams params;
  std::vector<EpochLog> logs;
  EpochSnapshot final_partition;  // final parameters, t = epochs - 1
};

using EpochObserver = std::function<void(const EpochSnapshot&, const EpochLog&)>;

/// `train` holds the labeled training pairs with observed labels; the message
/// passing graph uses the positive ones.
inline TrainResult run_training(const graph::Hamig& g, std::span<const graph::LabeledPair> train,
                                const TrainConfig& cfg, const EpochObserver& observer = {}) {
  cfg.validate();
  g.validate();
  if (cfg.model.input_dim != g.feature_dim()) {
    throw ConfigError("model input_dim " + std::to_string(cfg.model.input_dim) +
                      " does not match feature width " + std::to_string(g.feature_dim()));
  }
  const auto ctx = model::make_context(g, train, cfg.use_transaction_edges);
  TrainState st = init_state(cfg);
  TrainResult res;
  std::vector<graph::LabeledPair> last;
  for (int t = 0; t < cfg.epochs; ++t) {
    auto snap = partition_epoch(st.params, ctx, epoch_pairs(g, train, cfg, st.rng), t, cfg);
    auto log = train_epoch(st, ctx, snap, cfg);
    if (observer) observer(snap, log);
    res.logs.push_back(log);
    last = std::move(snap.pairs);
  }
  res.final_partition = partition_epoch(st.params, ctx, std::move(last), cfg.epochs - 1, cfg);
  res.params = std::move(st.params);
  return res;
}

inline std::string logs_jsonl(std::span<const EpochLog> logs) {
  std::string out;
  for (const auto& l : logs) out += l.to_json().dump() + "\n";
  return out;
}

}  // namespace hilomix::train
