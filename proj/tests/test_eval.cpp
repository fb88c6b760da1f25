#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>

#include "hilomix/eval/config.hpp"
#include "hilomix/eval/metrics.hpp"
#include "hilomix/eval/pipeline.hpp"

using namespace hilomix;
using namespace hilomix::eval;
namespace fs = std::filesystem;

namespace {

// Rank of the positive (index 0) in a descending sort, averaged over its
// tie group.
double sorted_rank(const RankingTask& t) {
  std::vector<double> all = {t.positive};
  all.insert(all.end(), t.negatives.begin(), t.negatives.end());
  std::sort(all.begin(), all.end(), std::greater<>());
  double sum = 0, n = 0;
  for (std::size_t k = 0; k < all.size(); ++k)
    if (all[k] == t.positive) sum += static_cast<double>(k + 1), ++n;
  return sum / n;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        ++pairs;
      }
  return num / pairs;
}

RankingTask task_with_rank(int rank) {
  RankingTask t{0.5, std::vector<double>(50, 0.1)};
  for (int k = 0; k < rank - 1; ++k) t.negatives[static_cast<std::size_t>(k)] = 0.9;
  return t;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HILOMIX_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hilomix_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kSmallConfig =
    "data.n_accounts = 240\n"
    "data.n_contracts = 4\n"
    "data.n_assoc_labels = 80\n"
    "data.feature_dim = 24\n"
    "train.epochs = 4\n"
    "model.hidden = 12\n"
    "model.embed = 12\n"
    "stack.n_trees = 10\n"
    "stack.mlp_epochs = 10\n"
    "eval.seeds = 3\n"
    "eval.ablation = false\n";

}  // namespace

TEST(Classification, PerfectPredictions) {
  std::vector<double> s = {0.9, 0.1, 0.8, 0.2};
  std::vector<int> y = {1, 0, 1, 0};
  EXPECT_EQ(f1_score(s, y), 1.0);
  EXPECT_EQ(auc(s, y), 1.0);
}

TEST(Classification, HalfPrecisionFullRecall) {
  std::vector<double> s = {0.9, 0.9, 0.9, 0.9};
  std::vector<int> y = {1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(f1_score(s, y), 2.0 / 3.0);
}

TEST(Classification, AllTiedIsHalf) {
  std::vector<double> s(7, 0.3);
  std::vector<int> y = {1, 0, 0, 1, 0, 1, 1};
  EXPECT_EQ(auc(s, y), 0.5);
}

TEST(Classification, SingleClassAucUndefined) {
  std::vector<double> s = {0.1, 0.2};
  std::vector<int> y = {1, 1};
  EXPECT_THROW(auc(s, y), UndefinedMetricError);
}

TEST(Classification, AucMatchesPairwiseOracle) {
  std::mt19937_64 rng(1);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = static_cast<double>(rng() % 7) / 7.0;  // coarse grid forces ties
      y[k] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auc(s, y), pairwise_auc(s, y), 1e-12) << inst;
  }
}

TEST(Ranking, AlwaysFirst) {
  std::vector<RankingTask> t = {task_with_rank(1), task_with_rank(1)};
  EXPECT_EQ(mrr(t), 1.0);
}

TEST(Ranking, KnownRanks) {
  std::vector<RankingTask> t = {task_with_rank(1), task_with_rank(2), task_with_rank(4)};
  EXPECT_DOUBLE_EQ(mrr(t), (1 + 0.5 + 0.25) / 3);
  std::vector<RankingTask> u = {task_with_rank(1), task_with_rank(4)};
  EXPECT_EQ(hits_at_k(u, 3), 0.5);
  EXPECT_EQ(hits_at_k(u, 51), 1.0);
}

TEST(Ranking, FullTieGivesMeanRank) {
  std::vector<RankingTask> t = {{0.4, std::vector<double>(50, 0.4)}};
  EXPECT_DOUBLE_EQ(mrr(t), 1.0 / 26.0);
}

TEST(Ranking, MatchesSortOracle) {
  std::mt19937_64 rng(2);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<RankingTask> tasks(1 + rng() % 20);
    for (auto& t : tasks) {
      t.positive = static_cast<double>(rng() % 10);
      t.negatives.resize(50);
      for (double& v : t.negatives) v = static_cast<double>(rng() % 10);
    }
    double m = 0;
    for (const auto& t : tasks) m += 1.0 / sorted_rank(t);
    EXPECT_EQ(mrr(tasks), m / static_cast<double>(tasks.size())) << inst;
    for (int k : {3, 5, 10}) {
      double h = 0;
      for (const auto& t : tasks) h += sorted_rank(t) <= k;
      EXPECT_EQ(hits_at_k(tasks, k), h / static_cast<double>(tasks.size()));
    }
    EXPECT_LE(hits_at_k(tasks, 3), hits_at_k(tasks, 5));
    EXPECT_LE(hits_at_k(tasks, 5), hits_at_k(tasks, 10));
  }
}

TEST(Ranking, CandidatesShareEndpointAndAvoidLabels) {
  graph::Hamig g;
  for (int k = 0; k < 80; ++k) g.account_ids.push_back("a" + std::to_string(k));
  g.associations = {{0, 1, 1}, {0, 2, 0}, {3, 4, 1}, {0, 5, 1}};
  std::vector<graph::LabeledPair> pos = {{0, 1, 1}, {3, 4, 1}};
  auto a = build_ranking_candidates(g, pos, 50, 9);
  auto b = build_ranking_candidates(g, pos, 50, 9);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(a[t].negatives.size(), 50u);
    std::set<std::uint64_t> seen;
    for (const auto& n : a[t].negatives) {
      EXPECT_TRUE(n.a == pos[t].a || n.b == pos[t].a);
      EXPECT_NE(n.a, n.b);
      seen.insert(graph::pair_key(n.a, n.b));
      for (const auto& l : g.associations) EXPECT_NE(graph::pair_key(n.a, n.b), graph::pair_key(l.a, l.b));
    }
    EXPECT_EQ(seen.size(), 50u);
    ASSERT_EQ(b[t].negatives.size(), 50u);
    for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(a[t].negatives[k], b[t].negatives[k]);
  }
}

TEST(MeanStd, SampleDeviation) {
  std::vector<double> v = {1, 2, 3};
  auto m = mean_std(v);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_DOUBLE_EQ(m.std, 1.0);
  std::vector<double> one = {4};
  EXPECT_EQ(mean_std(one).std, 0.0);
}

TEST(Config, ParsesAndRoundTrips) {
  auto c = parse_config("# comment\ntrain.epochs = 12  # trailing\neval.seeds = 1, 2,3\ndata.noise_mode=heuristic\n");
  EXPECT_EQ(c.train.epochs, 12);
  EXPECT_EQ(c.eval.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.data.synthetic.noise_mode, graph::NoiseMode::heuristic);
  const auto text = config_text(c);
  EXPECT_EQ(config_text(parse_config(text)), text);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("nonsense\n"), ConfigError);
  EXPECT_THROW(parse_config("train.epochs = 1\ntrain.epochs = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("train.epoch = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("train.epochs = ten\n"), ConfigError);
  EXPECT_THROW(parse_config("stack.folds = 11\n"), ConfigError);
  EXPECT_THROW(parse_config("eval.ablation = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("data.source = csv\n"), ConfigError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  io::write_text(dir / "ok.cfg", kSmallConfig);
  io::write_text(dir / "bad.cfg", "train.bogus = 1\n");
  EXPECT_EQ(run_cli("frobnicate --config " + (dir / "ok.cfg").string()), 2);
  EXPECT_EQ(run_cli("train"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "ok.cfg").string() + " --bogus"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.cfg").string()), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.cfg").string()), 2);
  EXPECT_EQ(run_cli("eval --config " + (dir / "ok.cfg").string() + " --out " + (dir / "nothing").string()), 1);
  fs::remove_all(dir);
}

TEST(Cli, GenerateIsDeterministic) {
  const auto dir = scratch("gen");
  io::write_text(dir / "c.cfg", kSmallConfig);
  const auto cfg = (dir / "c.cfg").string();
  ASSERT_EQ(run_cli("generate --config " + cfg + " --seed 7 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("generate --config " + cfg + " --seed 7 --out " + (dir / "b").string()), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "seed-7" / "data")) {
    const auto other = dir / "b" / "seed-7" / "data" / e.path().filename();
    EXPECT_EQ(io::read_text(e.path()), io::read_text(other)) << e.path().filename();
    ++files;
  }
  EXPECT_GE(files, 8u);
  fs::remove_all(dir);
}

TEST(Cli, ZeroInitModelIsChance) {
  const auto dir = scratch("zero");
  io::write_text(dir / "c.cfg", std::string(kSmallConfig) + "eval.zero_init = true\n");
  ASSERT_EQ(run_cli("all --config " + (dir / "c.cfg").string() + " --out " + (dir / "run").string()), 0);
  const auto m = nlohmann::json::parse(io::read_text(dir / "run" / "seed-3" / "eval" / "metrics.json"));
  EXPECT_NEAR(m["variants"]["hilomix"]["models"]["gnn_heads"]["auc"].get<double>(), 0.5, 0.05);
  fs::remove_all(dir);
}

TEST(Cli, ReportSeriesHaveOneRowPerEpoch) {
  const auto dir = scratch("report");
  io::write_text(dir / "c.cfg", kSmallConfig);
  ASSERT_EQ(run_cli("all --config " + (dir / "c.cfg").string() + " --out " + (dir / "run").string()), 0);
  io::CsvReader csv(dir / "run" / "report" / "label_dynamics.csv",
                    {"seed", "epoch", "clean", "flipped", "remaining", "cf_precision"});
  std::vector<std::string> row;
  int epochs = 0;
  while (csv.next(row)) {
    EXPECT_EQ(row[1], std::to_string(epochs));
    ++epochs;
  }
  EXPECT_EQ(epochs, 4);
  const auto m = nlohmann::json::parse(io::read_text(dir / "run" / "metrics.json"));
  const auto& s = m["aggregate"]["hilomix"]["stacked"];
  EXPECT_LE(s["hits@3"]["mean"].get<double>(), s["hits@5"]["mean"].get<double>());
  EXPECT_LE(s["hits@5"]["mean"].get<double>(), s["hits@10"]["mean"].get<double>());
  EXPECT_TRUE(fs::exists(dir / "run" / "report" / "report.md"));
  EXPECT_TRUE(fs::exists(dir / "run" / "config.txt"));
  fs::remove_all(dir);
}
