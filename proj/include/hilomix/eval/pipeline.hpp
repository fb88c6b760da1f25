#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hilomix/ensemble/stacking.hpp"
#include "hilomix/eval/config.hpp"
#include "hilomix/eval/metrics.hpp"
#include "hilomix/graph/features.hpp"
#include "hilomix/graph/ingest.hpp"
#include "hilomix/graph/snapshot.hpp"
#include "hilomix/graph/split.hpp"
#include "hilomix/graph/stats.hpp"
#include "hilomix/graph/synthetic.hpp"
#include "hilomix/io.hpp"
#include "hilomix/model/dual_gnn.hpp"
#include "hilomix/train/trainer.hpp"

namespace hilomix::eval {

namespace fs = std::filesystem;

// ---- logging ----------------------------------------------------------------

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

/// HILOMIX_LOG = quiet | info | debug (default info).
inline LogLevel log_level() {
  const char* v = std::getenv("HILOMIX_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::quiet;
  if (s == "debug" || s == "2") return LogLevel::debug;
  return LogLevel::info;
}

inline void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << "[hilomix] " << msg << "\n";
}

// ---- run layout ---------------------------------------------------------------
//
// <out>/config.txt                          resolved configuration
// <out>/seed-<s>/data/                      graph snapshot, split.json, raw CSVs
// <out>/seed-<s>/train/<variant>/           checkpoint, logs.jsonl, partitions
// <out>/seed-<s>/stack/<variant>/           ensemble bundle, stack.json
// <out>/seed-<s>/eval/metrics.json
// <out>/report/                             report.md, report.json, label_dynamics.csv
// <out>/metrics.json                        multi-seed metrics

inline const char* kMainVariant = "hilomix";
inline const char* kAblationVariant = "no_label_division";

struct RunLayout {
  fs::path root;

  [[nodiscard]] fs::path seed_dir(std::uint64_t s) const { return root / ("seed-" + std::to_string(s)); }
  [[nodiscard]] fs::path data(std::uint64_t s) const { return seed_dir(s) / "data"; }
  [[nodiscard]] fs::path train(std::uint64_t s, const std::string& v) const { return seed_dir(s) / "train" / v; }
  [[nodiscard]] fs::path stack(std::uint64_t s, const std::string& v) const { return seed_dir(s) / "stack" / v; }
  [[nodiscard]] fs::path eval(std::uint64_t s) const { return seed_dir(s) / "eval"; }
  [[nodiscard]] fs::path report() const { return root / "report"; }
};

inline std::vector<std::string> variants(const PipelineConfig& c) {
  std::vector<std::string> v = {kMainVariant};
  if (c.eval.ablation) v.emplace_back(kAblationVariant);
  return v;
}

inline train::TrainConfig variant_train_config(const PipelineConfig& c, const std::string& variant,
                                               std::uint64_t seed, std::size_t input_dim) {
  auto t = c.train;
  t.seed = seed;
  t.model.input_dim = input_dim;
  if (variant == kAblationVariant) t.label_division = false;
  return t;
}

// ---- generate -----------------------------------------------------------------

inline void write_split(const fs::path& path, const graph::Split& s) {
  io::write_text(path, nlohmann::json{{"train", s.train}, {"test", s.test}}.dump() + "\n");
}

inline graph::Split read_split(const fs::path& path) {
  const auto j = nlohmann::json::parse(io::read_text(path));
  return {j.at("train").get<std::vector<std::size_t>>(), j.at("test").get<std::vector<std::size_t>>()};
}

inline void run_generate(const PipelineConfig& c, const RunLayout& out, std::uint64_t seed) {
  const auto dir = out.data(seed);
  graph::Hamig g;
  if (c.data.source == "synthetic") {
    auto sc = c.data.synthetic;
    sc.seed = seed;
    auto data = graph::generate_synthetic(sc);
    graph::save_snapshot(dir, data.graph, &data.truth);
    io::write_text(dir / "transactions.csv", graph::transactions_csv(data.transactions));
    io::write_text(dir / "associations.csv", graph::associations_csv(data.graph.account_ids, data.graph.associations));
    g = std::move(data.graph);
  } else {
    g = graph::ingest(c.data.transactions, c.data.associations, c.data.synthetic.feature_dim);
    graph::save_snapshot(dir, g);
  }
  write_split(dir / "split.json", graph::stratified_split(train::labels_of(g.associations), c.data.test_fraction, seed));
  log(LogLevel::info, "seed " + std::to_string(seed) + ": " + std::to_string(g.n_accounts()) + " accounts, " +
                          std::to_string(g.n_contracts()) + " contracts, " + std::to_string(g.associations.size()) +
                          " labeled pairs");
}

// ---- shared loading -----------------------------------------------------------

struct SeedData {
  graph::Hamig graph;
  std::optional<graph::SyntheticTruth> truth;
  graph::Split split;
  std::vector<graph::LabeledPair> train, test;
};

inline SeedData load_seed_data(const RunLayout& out, std::uint64_t seed) {
  const auto dir = out.data(seed);
  if (!fs::exists(dir / "nodes.csv")) throw IoError("no dataset at " + dir.string() + " (run generate first)");
  SeedData d{graph::load_snapshot(dir), graph::load_truth(dir), read_split(dir / "split.json"), {}, {}};
  for (auto k : d.split.train) d.train.push_back(d.graph.associations.at(k));
  for (auto k : d.split.test) d.test.push_back(d.graph.associations.at(k));
  return d;
}

inline std::string checkpoint_name(const PipelineConfig& c, const std::string& variant, std::uint64_t seed) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_text(c) + "variant=" + variant)));
  return "ckpt-s" + std::to_string(seed) + "-" + std::string(hex).substr(0, 8);
}

// ---- train ----------------------------------------------------------------------

inline std::string epoch_file(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.csv", t);
  return buf;
}

inline void run_train(const PipelineConfig& c, const RunLayout& out, std::uint64_t seed) {
  const auto d = load_seed_data(out, seed);
  for (const auto& v : variants(c)) {
    const auto tc = variant_train_config(c, v, seed, d.graph.feature_dim());
    const auto dir = out.train(seed, v);
    fs::remove_all(dir);
    fs::create_directories(dir);
    train::TrainResult r;
    if (c.eval.zero_init) {
      r.params = model::ModelParams::zeros(tc.model);
      const auto ctx = model::make_context(d.graph, d.train, tc.use_transaction_edges);
      r.final_partition = train::partition_epoch(r.params, ctx, d.train, tc.epochs - 1, tc);
    } else {
      r = train::run_training(d.graph, d.train, tc, [&](const train::EpochSnapshot& s, const train::EpochLog& l) {
        if (c.eval.partition_dumps) io::write_text(dir / "partitions" / epoch_file(s.epoch), train::partition_csv(s));
        char line[200];
        std::snprintf(line, sizeof line, "seed %llu %s epoch %d/%d  L=%.4f con=%.4f sup=%.4f  cl=%zu cf=%zu re=%zu",
                      static_cast<unsigned long long>(seed), v.c_str(), l.epoch + 1, tc.epochs, l.total, l.l_con,
                      l.l_sup, l.clean, l.flipped, l.remaining);
        log(LogLevel::info, line);
      });
    }
    const auto ckpt = checkpoint_name(c, v, seed);
    model::save_checkpoint(dir / ckpt, r.params);
    io::write_text(dir / "logs.jsonl", train::logs_jsonl(r.logs));
    io::write_text(dir / "final_partition.csv", train::partition_csv(r.final_partition));
    const nlohmann::json info = {{"variant", v},
                                 {"checkpoint", ckpt},
                                 {"epochs", static_cast<int>(r.logs.size())},
                                 {"train_pairs", d.train.size()},
                                 {"label_division", tc.label_division},
                                 {"zero_init", c.eval.zero_init}};
    io::write_text(dir / "train.json", info.dump(2) + "\n");
  }
}

// ---- stack ----------------------------------------------------------------------

/// Training targets of the labeled train pairs after the final partition.
inline std::vector<int> final_targets(const fs::path& train_dir, std::span<const graph::LabeledPair> train) {
  io::CsvReader csv(train_dir / "final_partition.csv", {"edge", "a", "b", "set", "l_mul", "mu", "y", "y_hat"});
  std::vector<int> y;
  std::vector<std::string> row;
  while (y.size() < train.size() && csv.next(row)) {
    const auto& p = train[y.size()];
    if (io::parse_int(row[1], csv.where(), "a") != static_cast<std::int64_t>(p.a) ||
        io::parse_int(row[2], csv.where(), "b") != static_cast<std::int64_t>(p.b)) {
      throw ValidationError(csv.where() + ": final partition rows do not follow the training split");
    }
    y.push_back(static_cast<int>(io::parse_int(row[7], csv.where(), "y_hat")));
  }
  if (y.size() != train.size()) throw ValidationError("final partition is shorter than the training split");
  return y;
}

struct VariantModel {
  model::ModelParams params;
  model::Embeddings emb;
  Matrix x_std;
  std::size_t n_accounts = 0;

  [[nodiscard]] Matrix features(std::span<const graph::LabeledPair> pairs) const {
    return ens::pair_features(emb, x_std, pairs);
  }
  [[nodiscard]] ens::FeatureLayout layout() const { return {emb.lf.cols(), x_std.cols()}; }
};

inline VariantModel load_variant(const PipelineConfig& c, const RunLayout& out, const SeedData& d, std::uint64_t seed,
                                 const std::string& v) {
  const auto dir = out.train(seed, v);
  if (!fs::exists(dir / "train.json")) throw IoError("no trained model at " + dir.string() + " (run train first)");
  const auto info = nlohmann::json::parse(io::read_text(dir / "train.json"));
  VariantModel m;
  m.params = model::load_checkpoint(dir / info.at("checkpoint").get<std::string>());
  const auto ctx = model::make_context(d.graph, d.train, c.train.use_transaction_edges);
  m.emb = model::evaluate(m.params, ctx);
  m.x_std = graph::standardize_columns(d.graph.features);
  m.n_accounts = d.graph.n_accounts();
  return m;
}

inline void run_stack(const PipelineConfig& c, const RunLayout& out, std::uint64_t seed) {
  const auto d = load_seed_data(out, seed);
  for (const auto& v : variants(c)) {
    const auto m = load_variant(c, out, d, seed, v);
    const auto y = final_targets(out.train(seed, v), d.train);
    const Matrix f = m.features(d.train);
    auto sc = c.stack;
    sc.seed = seed;
    const auto r = ens::fit_stack(f, y, m.layout(), sc);
    const auto dir = out.stack(seed, v);
    fs::remove_all(dir);
    ens::save_bundle(dir / "bundle", r, d.train, y);
    nlohmann::json spots = nlohmann::json::array();
    bool identical = true;
    for (const auto& s : ens::spot_check_oof(f, y, r.oof, m.layout(), sc, 5, seed)) {
      identical = identical && s.identical();
      spots.push_back({{"row", s.row}, {"model", ens::base_name(s.model)}, {"stored", s.stored}, {"refit", s.refit}});
    }
    std::size_t changed = 0;
    for (std::size_t k = 0; k < y.size(); ++k) changed += y[k] != d.train[k].label;
    const nlohmann::json info = {{"variant", v},
                                 {"rows", y.size()},
                                 {"labels_changed_by_partition", changed},
                                 {"spot_check", spots},
                                 {"spot_check_identical", identical}};
    io::write_text(dir / "stack.json", info.dump(2) + "\n");
    log(LogLevel::info, "seed " + std::to_string(seed) + " " + v + ": stacked " + std::to_string(y.size()) +
                            " pairs, spot check " + (identical ? "identical" : "MISMATCH"));
  }
}

// ---- eval -----------------------------------------------------------------------

inline std::vector<std::string> scorer_names() {
  std::vector<std::string> n = {"stacked", "gnn_heads"};
  for (auto k : ens::kBaseKinds) n.emplace_back(ens::base_name(k));
  return n;
}

/// Scores of every scorer for `pairs`: column 0 stacked, 1 mean of the two
/// trained link heads, then the five base models.
inline std::vector<std::vector<double>> score_pairs(VariantModel& m, const ens::StackedEnsemble& e,
                                                    std::span<const graph::LabeledPair> pairs) {
  const Matrix f = m.features(pairs);
  const Matrix base = e.base_predictions(f);
  std::vector<std::vector<double>> out(2 + base.cols(), std::vector<double>(pairs.size()));
  out[0] = e.meta.predict_proba(base);
  const auto heads = train::predict_pairs(m.params, m.emb, pairs, m.n_accounts);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out[1][k] = 0.5 * (heads.lf(k, 1) + heads.hf(k, 1));
    for (std::size_t b = 0; b < base.cols(); ++b) out[2 + b][k] = base(k, b);
  }
  return out;
}

inline nlohmann::json run_eval(const PipelineConfig& c, const RunLayout& out, std::uint64_t seed) {
  const auto d = load_seed_data(out, seed);
  std::vector<int> truth_y, observed_y;
  for (std::size_t k = 0; k < d.test.size(); ++k) {
    observed_y.push_back(d.test[k].label);
    truth_y.push_back(d.truth ? d.truth->labels.at(d.split.test[k]).truth : d.test[k].label);
  }
  std::vector<graph::LabeledPair> positives;
  for (std::size_t k = 0; k < d.test.size(); ++k)
    if (truth_y[k] == 1) positives.push_back(d.test[k]);
  const auto candidates = build_ranking_candidates(d.graph, positives, c.eval.negatives, seed);
  std::vector<graph::LabeledPair> ranked;
  for (const auto& cand : candidates) {
    ranked.push_back(cand.positive);
    ranked.insert(ranked.end(), cand.negatives.begin(), cand.negatives.end());
  }

  nlohmann::json res = {{"seed", seed},
                        {"label_source", d.truth ? "planted" : "observed"},
                        {"test_pairs", d.test.size()},
                        {"ranking_tasks", candidates.size()},
                        {"ranking_protocol", "positive plus " + std::to_string(c.eval.negatives) +
                                                 " negatives sharing its first endpoint, unlabeled pairs only"},
                        {"variants", nlohmann::json::object()}};
  const auto names = scorer_names();
  for (const auto& v : variants(c)) {
    auto m = load_variant(c, out, d, seed, v);
    const auto e = ens::load_bundle(out.stack(seed, v) / "bundle");
    const auto test_scores = score_pairs(m, e, d.test);
    const auto rank_scores = score_pairs(m, e, ranked);
    nlohmann::json models = nlohmann::json::object();
    for (std::size_t s = 0; s < names.size(); ++s) {
      std::vector<RankingTask> tasks;
      std::size_t at = 0;
      for (const auto& cand : candidates) {
        RankingTask t{rank_scores[s][at++], {}};
        for (std::size_t q = 0; q < cand.negatives.size(); ++q) t.negatives.push_back(rank_scores[s][at++]);
        tasks.push_back(std::move(t));
      }
      models[names[s]] = compute_metrics(test_scores[s], truth_y, tasks).to_json();
    }
    nlohmann::json observed = nlohmann::json::object();
    for (std::size_t s = 0; s < 2; ++s)
      observed[names[s]] = {{"f1", f1_score(test_scores[s], observed_y)}, {"auc", auc(test_scores[s], observed_y)}};
    res["variants"][v] = {{"models", models}, {"observed_labels", observed}};
  }
  io::write_text(out.eval(seed) / "metrics.json", res.dump(2) + "\n");
  const auto& main = res["variants"][kMainVariant]["models"]["stacked"];
  char line[160];
  std::snprintf(line, sizeof line, "seed %llu: stacked F1 %.4f AUC %.4f MRR %.4f",
                static_cast<unsigned long long>(seed), main["f1"].get<double>(), main["auc"].get<double>(),
                main["mrr"].get<double>());
  log(LogLevel::info, line);
  return res;
}

// ---- report ---------------------------------------------------------------------

inline const std::vector<std::string>& metric_keys() {
  static const std::vector<std::string> k = {"f1", "auc", "mrr", "hits@3", "hits@5", "hits@10"};
  return k;
}

inline std::string pm(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", m.mean, m.std);
  return buf;
}

struct DynamicsRow {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::size_t clean = 0, flipped = 0, remaining = 0;
  std::optional<double> cf_precision;
};

/// Per-epoch label-set sizes, with flip precision against planted truth when
/// the partition dumps and truth are available.
inline std::vector<DynamicsRow> label_dynamics(const RunLayout& out, std::uint64_t seed, const SeedData& d) {
  const auto dir = out.train(seed, kMainVariant);
  std::vector<DynamicsRow> rows;
  const auto text = io::read_text(dir / "logs.jsonl");
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    DynamicsRow r{seed, j.at("epoch").get<int>(), j.at("clean").get<std::size_t>(), j.at("flipped").get<std::size_t>(),
                  j.at("remaining").get<std::size_t>(), std::nullopt};
    const auto dump = dir / "partitions" / epoch_file(r.epoch);
    if (d.truth && fs::exists(dump) && r.flipped > 0) {
      io::CsvReader csv(dump, {"edge", "a", "b", "set", "l_mul", "mu", "y", "y_hat"});
      std::vector<std::string> f;
      double hit = 0, n = 0;
      while (csv.next(f)) {
        if (f[3] != "cf") continue;
        const auto a = static_cast<std::size_t>(io::parse_int(f[1], csv.where(), "a"));
        const auto b = static_cast<std::size_t>(io::parse_int(f[2], csv.where(), "b"));
        const int truth = d.truth->user_of.at(a) == d.truth->user_of.at(b) ? 1 : 0;
        hit += io::parse_int(f[7], csv.where(), "y_hat") == truth;
        ++n;
      }
      r.cf_precision = hit / n;
    }
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json stats_json(const graph::GraphStats& s) {
  return {{"nodes", s.nodes},
          {"edges", s.edges},
          {"average_degree", s.average_degree},
          {"average_clustering", s.average_clustering},
          {"density", s.density}};
}

inline nlohmann::json run_report(const PipelineConfig& c, const RunLayout& out, const std::vector<std::uint64_t>& seeds) {
  const auto names = scorer_names();
  const auto vars = variants(c);
  nlohmann::json per_seed = nlohmann::json::array();
  for (auto s : seeds) {
    const auto p = out.eval(s) / "metrics.json";
    if (!fs::exists(p)) throw IoError("no metrics at " + p.string() + " (run eval first)");
    per_seed.push_back(nlohmann::json::parse(io::read_text(p)));
  }
  // Aggregate: variant -> scorer -> metric -> {mean, std}.
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& v : vars) {
    for (const auto& n : names) {
      for (const auto& k : metric_keys()) {
        std::vector<double> vals;
        for (const auto& m : per_seed) vals.push_back(m["variants"][v]["models"][n][k].get<double>());
        const auto ms = mean_std(vals);
        agg[v][n][k] = {{"mean", ms.mean}, {"std", ms.std}};
      }
    }
  }
  auto get = [&](const std::string& v, const std::string& n, const std::string& k) {
    const auto& j = agg[v][n][k];
    return MeanStd{j["mean"].get<double>(), j["std"].get<double>()};
  };

  std::string md = "# HiLoMix report\n\n";
  md += "Seeds: ";
  for (std::size_t k = 0; k < seeds.size(); ++k) md += (k ? ", " : "") + std::to_string(seeds[k]);
  md += ". Classification labels: " + per_seed[0]["label_source"].get<std::string>() + ".\n";
  md += "Ranking protocol: " + per_seed[0]["ranking_protocol"].get<std::string>() + ".\n\n";
  md += "## Models (mean ± std over seeds)\n\n| Model | F1 | AUC | MRR | Hits@3 | Hits@5 | Hits@10 |\n"
        "|---|---|---|---|---|---|---|\n";
  for (const auto& n : names) {
    md += "| " + n;
    for (const auto& k : metric_keys()) md += " | " + pm(get(kMainVariant, n, k));
    md += " |\n";
  }
  md += "\n## Ablation (stacked predictor)\n\n| Variant | F1 | AUC | MRR | Hits@3 | Hits@5 | Hits@10 |\n"
        "|---|---|---|---|---|---|---|\n";
  for (const auto& v : vars) {
    md += "| " + std::string(v == kMainVariant ? "HiLoMix" : "w/o label division");
    for (const auto& k : metric_keys()) md += " | " + pm(get(v, "stacked", k));
    md += " |\n";
  }

  std::string dyn = "seed,epoch,clean,flipped,remaining,cf_precision\n";
  nlohmann::json stats = nlohmann::json::array();
  md += "\n## Graph statistics\n\n| Seed | View | Nodes | Edges | Avg degree | Avg clustering | Density |\n"
        "|---|---|---|---|---|---|---|\n";
  for (auto s : seeds) {
    const auto d = load_seed_data(out, s);
    for (const auto& r : label_dynamics(out, s, d)) {
      dyn += std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," + std::to_string(r.clean) + "," +
             std::to_string(r.flipped) + "," + std::to_string(r.remaining) + "," +
             (r.cf_precision ? io::format_double(*r.cf_precision) : std::string()) + "\n";
    }
    const auto mig = graph::graph_stats(d.graph, graph::StatsView::assoc_only);
    const auto full = graph::graph_stats(d.graph, graph::StatsView::full);
    stats.push_back({{"seed", s}, {"assoc_only", stats_json(mig)}, {"full", stats_json(full)}});
    for (const auto& [name, st] : {std::pair{"assoc-only", mig}, std::pair{"full", full}}) {
      char line[200];
      std::snprintf(line, sizeof line, "| %llu | %s | %zu | %zu | %.4f | %.4f | %.6f |\n",
                    static_cast<unsigned long long>(s), name, st.nodes, st.edges, st.average_degree,
                    st.average_clustering, st.density);
      md += line;
    }
  }
  md += "\nLabel-set sizes per epoch are in label_dynamics.csv.\n";

  const nlohmann::json metrics = {{"seeds", seeds}, {"per_seed", per_seed}, {"aggregate", agg}};
  const nlohmann::json report = {{"metrics", metrics}, {"graph_stats", stats}};
  io::write_text(out.report() / "report.md", md);
  io::write_text(out.report() / "report.json", report.dump(2) + "\n");
  io::write_text(out.report() / "label_dynamics.csv", dyn);
  io::write_text(out.root / "metrics.json", metrics.dump(2) + "\n");
  return metrics;
}

// ---- driver -----------------------------------------------------------------------

inline void write_resolved_config(const PipelineConfig& c, const RunLayout& out) {
  io::write_text(out.root / "config.txt", config_text(c));
}

inline void run_command(const std::string& cmd, const PipelineConfig& c, const fs::path& root) {
  const RunLayout out{root};
  fs::create_directories(root);
  write_resolved_config(c, out);
  const auto& seeds = c.eval.seeds;
  if (cmd == "generate") {
    for (auto s : seeds) run_generate(c, out, s);
  } else if (cmd == "train") {
    for (auto s : seeds) run_train(c, out, s);
  } else if (cmd == "stack") {
    for (auto s : seeds) run_stack(c, out, s);
  } else if (cmd == "eval") {
    for (auto s : seeds) run_eval(c, out, s);
  } else if (cmd == "report") {
    run_report(c, out, seeds);
  } else if (cmd == "all") {
    for (auto s : seeds) {
      run_generate(c, out, s);
      run_train(c, out, s);
      run_stack(c, out, s);
      run_eval(c, out, s);
    }
    run_report(c, out, seeds);
  } else {
    throw ConfigError("unknown subcommand '" + cmd + "'");
  }
}

}  // namespace hilomix::eval
