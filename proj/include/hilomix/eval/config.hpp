#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hilomix/ensemble/stacking.hpp"
#include "hilomix/error.hpp"
#include "hilomix/graph/synthetic.hpp"
#include "hilomix/io.hpp"
#include "hilomix/train/trainer.hpp"

namespace hilomix::eval {

// Config files hold one `key = value` per line; `#` starts a comment.

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq)), value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

struct DataConfig {
  std::string source = "synthetic";  // or "csv"
  std::string transactions, associations;
  graph::SyntheticConfig synthetic;
  double test_fraction = 0.2;
};

struct EvalConfig {
  std::vector<std::uint64_t> seeds = {7, 8, 9};
  std::size_t negatives = 50;
  bool ablation = true;          // also run the label-division-off variant
  bool zero_init = false;        // skip training and keep zero parameters
  bool partition_dumps = true;   // per-epoch partition CSVs
};

struct PipelineConfig {
  DataConfig data;
  train::TrainConfig train;
  ens::StackConfig stack;
  EvalConfig eval;
};

namespace detail {

template <class T>
void parse_value(const std::string& key, const std::string& s, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (s == "true" || s == "1") out = true;
    else if (s == "false" || s == "0") out = false;
    else throw ConfigError(key + ": expected true or false, got '" + s + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = s;
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    out.clear();
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
      std::uint64_t v = 0;
      parse_value(key, trim(item), v);
      out.push_back(v);
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
  } else if constexpr (std::is_same_v<T, graph::NoiseMode>) {
    if (s == "symmetric") out = graph::NoiseMode::symmetric;
    else if (s == "heuristic") out = graph::NoiseMode::heuristic;
    else throw ConfigError(key + ": expected symmetric or heuristic, got '" + s + "'");
  } else {
    T v{};
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError(key + ": cannot parse '" + s + "'");
    out = v;
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k]);
    return out;
  } else if constexpr (std::is_same_v<T, graph::NoiseMode>) {
    return v == graph::NoiseMode::symmetric ? "symmetric" : "heuristic";
  } else if constexpr (std::is_floating_point_v<T>) {
    return io::format_double(v);
  } else {
    return std::to_string(v);
  }
}

}  // namespace detail

/// Calls f(key, field) for every configurable field, in file order.
template <class Config, class F>
void visit_fields(Config& c, F&& f) {
  auto& d = c.data;
  f("data.source", d.source);
  f("data.transactions", d.transactions);
  f("data.associations", d.associations);
  f("data.n_accounts", d.synthetic.n_accounts);
  f("data.n_contracts", d.synthetic.n_contracts);
  f("data.n_users", d.synthetic.n_users);
  f("data.tx_per_account", d.synthetic.tx_per_account);
  f("data.n_assoc_labels", d.synthetic.n_assoc_labels);
  f("data.positive_fraction", d.synthetic.positive_fraction);
  f("data.noise_rate", d.synthetic.noise_rate);
  f("data.noise_mode", d.synthetic.noise_mode);
  f("data.feature_dim", d.synthetic.feature_dim);
  f("data.test_fraction", d.test_fraction);

  auto& t = c.train;
  f("train.epochs", t.epochs);
  f("train.batch_size", t.batch_size);
  f("train.anchors", t.anchors);
  f("train.learning_rate", t.learning_rate);
  f("train.tau", t.tau);
  f("train.lambda", t.lambda);
  f("train.negative_ratio", t.negative_ratio);
  f("train.clamp_eps", t.clamp_eps);
  f("train.clip_norm", t.clip_norm);
  f("train.label_division", t.label_division);
  f("train.literal_mutual_loss", t.literal_mutual_loss);
  f("train.use_transaction_edges", t.use_transaction_edges);
  f("train.freeze_scorer", t.freeze_scorer);
  f("model.hidden", t.model.hidden);
  f("model.embed", t.model.embed);
  f("model.layers", t.model.branch.layers);
  f("model.alpha", t.model.branch.alpha);

  auto& s = c.stack;
  f("stack.folds", s.folds);
  f("stack.l2", s.logistic.l2);
  f("stack.lr_max_iterations", s.logistic.max_iterations);
  f("stack.n_trees", s.forest.n_trees);
  f("stack.max_depth", s.forest.max_depth);
  f("stack.mlp_hidden", s.mlp.hidden);
  f("stack.mlp_epochs", s.mlp.epochs);
  f("stack.mlp_learning_rate", s.mlp.learning_rate);
  f("stack.mlp_batch_size", s.mlp.batch_size);

  auto& e = c.eval;
  f("eval.seeds", e.seeds);
  f("eval.negatives", e.negatives);
  f("eval.ablation", e.ablation);
  f("eval.zero_init", e.zero_init);
  f("eval.partition_dumps", e.partition_dumps);
}

inline PipelineConfig parse_config(std::string_view text, const std::string& origin = "config") {
  auto kv = parse_key_values(text, origin);
  PipelineConfig c;
  visit_fields(c, [&](const std::string& key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    detail::parse_value(key, it->second, field);
    kv.erase(it);
  });
  if (!kv.empty()) throw ConfigError(origin + ": unknown key '" + kv.begin()->first + "'");
  if (c.data.source != "synthetic" && c.data.source != "csv") {
    throw ConfigError("data.source must be synthetic or csv");
  }
  if (c.data.source == "csv" && (c.data.transactions.empty() || c.data.associations.empty())) {
    throw ConfigError("data.source = csv needs data.transactions and data.associations");
  }
  if (!(c.data.test_fraction > 0 && c.data.test_fraction < 1)) throw ConfigError("data.test_fraction must lie in (0, 1)");
  if (c.train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  c.stack.validate();
  if (c.eval.negatives < 1) throw ConfigError("eval.negatives must be >= 1");
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(io::read_text(path), path.string());
}

/// Every field as `key = value`, suitable for parse_config.
inline std::string config_text(const PipelineConfig& c) {
  std::string out;
  visit_fields(c, [&](const std::string& key, const auto& field) {
    out += key + " = " + detail::format_value(field) + "\n";
  });
  return out;
}

/// 64-bit FNV-1a, used to name checkpoint directories.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace hilomix::eval
