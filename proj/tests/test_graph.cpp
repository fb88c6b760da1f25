#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <unistd.h>

#include "hilomix/graph.hpp"

using namespace hilomix;
using namespace hilomix::graph;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("hilomix_graph_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write(const fs::path& p, const std::string& text) {
  io::write_text(p, text);
  return p;
}

const std::string kTxHeader = "account_address,contract_id,direction,timestamp,gas_price,value\n";

SyntheticConfig small_config(std::uint64_t seed = 3) {
  SyntheticConfig c;
  c.n_accounts = 300;
  c.n_contracts = 4;
  c.n_assoc_labels = 80;
  c.feature_dim = 24;
  c.seed = seed;
  return c;
}

void expect_same_graph(const Hamig& a, const Hamig& b) {
  EXPECT_EQ(a.account_ids, b.account_ids);
  EXPECT_EQ(a.contract_ids, b.contract_ids);
  EXPECT_EQ(a.tx_edges, b.tx_edges);
  EXPECT_EQ(a.associations, b.associations);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.feature_names, b.feature_names);
}

}  // namespace

TEST(Ingest, DuplicatePairGivesOneEdgeTwoEvents) {
  TempDir d;
  auto p = write(d.path / "tx.csv", kTxHeader + "0xa,pool0,deposit,100,10,1\n0xa,pool0,withdraw,200,12,1\n");
  auto t = ingest_transactions(p);
  EXPECT_EQ(t.edges.size(), 1u);
  EXPECT_EQ(t.events.size(), 2u);
}

TEST(Ingest, EmptyFileGivesEmptyGraph) {
  TempDir d;
  auto tx = write(d.path / "tx.csv", "");
  auto aa = write(d.path / "aa.csv", "");
  Hamig g = ingest(tx, aa, 16);
  EXPECT_EQ(g.n_nodes(), 0u);
  EXPECT_TRUE(g.tx_edges.empty());
  EXPECT_TRUE(g.associations.empty());
}

TEST(Ingest, RowErrors) {
  TempDir d;
  auto neg = write(d.path / "neg.csv", kTxHeader + "0xa,pool0,deposit,100,10,1\n0xa,pool0,deposit,100,-1,1\n");
  try {
    ingest_transactions(neg);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  auto dir = write(d.path / "dir.csv", kTxHeader + "0xa,pool0,sideways,100,10,1\n");
  EXPECT_THROW(ingest_transactions(dir), ValidationError);
  auto bad = write(d.path / "bad.csv", kTxHeader + "0xa,pool0,deposit,abc,10,1\n");
  EXPECT_THROW(ingest_transactions(bad), ValidationError);
  auto short_row = write(d.path / "short.csv", kTxHeader + "0xa,pool0,deposit\n");
  EXPECT_THROW(ingest_transactions(short_row), ValidationError);
  auto hdr = write(d.path / "hdr.csv", "a,b,c\n");
  EXPECT_THROW(ingest_transactions(hdr), ValidationError);
}

TEST(Ingest, AssociationsUndirectedDedup) {
  TempDir d;
  auto tx = write(d.path / "tx.csv", kTxHeader + "0xa,p,deposit,1,1,1\n0xb,p,deposit,1,1,1\n");
  auto t = ingest_transactions(tx);
  auto aa = write(d.path / "aa.csv", "address_a,address_b,label\n0xa,0xb,1\n0xb,0xa,1\n");
  auto pairs = ingest_associations(aa, t.account_index());
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], (LabeledPair{0, 1, 1}));

  auto self = write(d.path / "self.csv", "address_a,address_b,label\n0xa,0xa,1\n");
  EXPECT_THROW(ingest_associations(self, t.account_index()), ValidationError);
  auto unknown = write(d.path / "unk.csv", "address_a,address_b,label\n0xa,0xz,1\n");
  EXPECT_THROW(ingest_associations(unknown, t.account_index()), UnresolvedNodeError);
  auto conflict = write(d.path / "conf.csv", "address_a,address_b,label\n0xa,0xb,1\n0xb,0xa,0\n");
  EXPECT_THROW(ingest_associations(conflict, t.account_index()), ValidationError);
}

TEST(Ingest, DistinctAssociationRowsAllKept) {
  TempDir d;
  std::string tx = kTxHeader;
  const int n = 100;
  for (int k = 0; k < n; ++k) tx += "acc" + std::to_string(k) + ",p,deposit,1,1,1\n";
  auto t = ingest_transactions(write(d.path / "tx.csv", tx));
  std::string aa = "address_a,address_b,label\n";
  int rows = 0;
  for (int i = 0; i < n && rows < 4074; ++i)
    for (int j = i + 1; j < n && rows < 4074; ++j, ++rows)
      aa += "acc" + std::to_string(i) + ",acc" + std::to_string(j) + "," + std::to_string(rows % 2) + "\n";
  auto pairs = ingest_associations(write(d.path / "aa.csv", aa), t.account_index());
  EXPECT_EQ(pairs.size(), 4074u);
}

TEST(Ingest, RoundTripThroughCsv) {
  TempDir d;
  auto data = generate_synthetic(small_config());
  auto tx = write(d.path / "tx.csv", transactions_csv(data.transactions));
  auto aa = write(d.path / "aa.csv", associations_csv(data.graph.account_ids, data.graph.associations));
  Hamig g = ingest(tx, aa, data.graph.feature_dim());
  expect_same_graph(data.graph, g);
}

TEST(Features, GasMean) {
  std::vector<TxEvent> ev;
  for (double gas : {10.0, 20.0, 30.0}) ev.push_back({0, 0, Direction::deposit, 100, gas, 1.0});
  Matrix x = extract_features(ev, 1, 1, 18);
  auto names = feature_manifest({"p"}, 18);
  auto col = static_cast<std::size_t>(std::find(names.begin(), names.end(), "gas_mean") - names.begin());
  EXPECT_DOUBLE_EQ(x(0, col), 20.0);
  auto dep = static_cast<std::size_t>(std::find(names.begin(), names.end(), "deposit_count") - names.begin());
  EXPECT_DOUBLE_EQ(x(0, dep), 3.0);
}

TEST(Features, ZeroEventAccountIsZero) {
  std::vector<TxEvent> ev = {{1, 0, Direction::withdraw, 5, 3.0, 1.0}};
  Matrix x = extract_features(ev, 2, 1, 20);
  for (double v : x.row(0)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(x(1, 17), 1.0);  // has_events
}

TEST(Features, DimensionTooSmall) {
  EXPECT_THROW(extract_features({}, 1, 8, 31), ConfigError);
  EXPECT_THROW(feature_manifest(std::vector<std::string>(8, "p"), 31), ConfigError);
}

TEST(Features, StandardizedColumns) {
  auto data = generate_synthetic(small_config());
  Matrix z = standardize_columns(data.graph.features);
  for (std::size_t j = 0; j < z.cols(); ++j) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) mean += z(i, j);
    mean /= static_cast<double>(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
    const double sd = std::sqrt(var / static_cast<double>(z.rows()));
    EXPECT_NEAR(mean, 0.0, 1e-9);
    if (sd > 0) EXPECT_NEAR(sd, 1.0, 1e-9) << "column " << j;
  }
}

TEST(Features, PermutationInvariant) {
  auto data = generate_synthetic(small_config());
  auto events = data.transactions.events;
  std::mt19937_64 rng(11);
  std::shuffle(events.begin(), events.end(), rng);
  Matrix x = extract_features(events, data.graph.n_accounts(), data.graph.n_contracts(),
                              data.graph.feature_dim());
  EXPECT_EQ(x, data.graph.features);
}

TEST(Features, ContractRowsOneHot) {
  auto data = generate_synthetic(small_config());
  Matrix x = node_feature_matrix(data.graph);
  ASSERT_EQ(x.rows(), data.graph.n_nodes());
  for (std::size_t c = 0; c < data.graph.n_contracts(); ++c) {
    auto row = x.row(data.graph.n_accounts() + c);
    EXPECT_EQ(std::accumulate(row.begin(), row.end(), 0.0), 1.0);
    EXPECT_EQ(row[c], 1.0);
  }
}

TEST(Synthetic, NoNoiseMatchesTruth) {
  auto cfg = small_config();
  cfg.noise_rate = 0.0;
  auto data = generate_synthetic(cfg);
  EXPECT_EQ(data.truth.flipped_count(), 0u);
  for (const auto& l : data.truth.labels) EXPECT_EQ(l.truth, l.observed);
}

TEST(Synthetic, OracleF1IsOneWithoutNoise) {
  auto cfg = small_config();
  cfg.noise_rate = 0.0;
  auto data = generate_synthetic(cfg);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& p : data.graph.associations) {
    const int pred = data.truth.user_of[p.a] == data.truth.user_of[p.b];
    tp += pred && p.label;
    fp += pred && !p.label;
    fn += !pred && p.label;
  }
  ASSERT_GT(tp, 0u);
  const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  EXPECT_EQ(f1, 1.0);
}

TEST(Synthetic, FlipCountWithinBinomialBound) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    SyntheticConfig cfg;
    cfg.seed = seed;
    auto data = generate_synthetic(cfg);
    ASSERT_EQ(data.truth.labels.size(), 500u);
    const auto flips = data.truth.flipped_count();
    EXPECT_GE(flips, 75u) << seed;
    EXPECT_LE(flips, 125u) << seed;
  }
}

TEST(Synthetic, HeuristicNoiseFlipsBusyPairs) {
  SyntheticConfig cfg;
  cfg.noise_mode = NoiseMode::heuristic;
  auto data = generate_synthetic(cfg);
  const auto flips = data.truth.flipped_count();
  EXPECT_GE(flips, 75u);
  EXPECT_LE(flips, 125u);
  std::vector<double> activity(data.graph.n_accounts());
  for (const auto& e : data.transactions.events) activity[e.account] += 1;
  double flipped = 0, kept = 0;
  std::size_t nf = 0, nk = 0;
  for (const auto& l : data.truth.labels) {
    const double a = activity[l.a] + activity[l.b];
    if (l.flipped()) flipped += a, ++nf;
    else kept += a, ++nk;
  }
  EXPECT_GT(flipped / nf, kept / nk);
}

TEST(Synthetic, SameSeedByteIdentical) {
  TempDir d;
  auto a = generate_synthetic(small_config(9));
  auto b = generate_synthetic(small_config(9));
  save_snapshot(d.path / "a", a.graph, &a.truth);
  save_snapshot(d.path / "b", b.graph, &b.truth);
  for (const char* f : {"nodes.csv", "edges_at.csv", "edges_aa.csv", "features.bin", "features.json", "truth.json"}) {
    EXPECT_EQ(io::read_text(d.path / "a" / f), io::read_text(d.path / "b" / f)) << f;
  }
  auto c = generate_synthetic(small_config(10));
  EXPECT_NE(a.graph.account_ids, c.graph.account_ids);
}

TEST(Synthetic, PositivesShareUser) {
  auto data = generate_synthetic(small_config());
  for (const auto& l : data.truth.labels) {
    EXPECT_EQ(l.truth == 1, data.truth.user_of[l.a] == data.truth.user_of[l.b]);
  }
}

TEST(Synthetic, InfeasibleConfig) {
  SyntheticConfig cfg = small_config();
  cfg.n_users = cfg.n_accounts;  // no same-user pairs
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = small_config();
  cfg.n_users = cfg.n_accounts + 1;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = small_config();
  cfg.noise_rate = 0.5;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Stats, PathGraph) {
  std::vector<Edge> e = {{0, 1}, {1, 2}};
  auto s = graph_stats(3, e);
  EXPECT_DOUBLE_EQ(s.average_degree, 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.average_clustering, 0.0);
  EXPECT_DOUBLE_EQ(s.density, 2.0 / 3.0);
}

TEST(Stats, Triangle) {
  std::vector<Edge> e = {{0, 1}, {1, 2}, {0, 2}};
  auto s = graph_stats(3, e);
  EXPECT_DOUBLE_EQ(s.average_clustering, 1.0);
  EXPECT_DOUBLE_EQ(s.density, 1.0);
}

TEST(Stats, FullViewDenser) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto data = generate_synthetic(small_config(seed));
    auto mig = graph_stats(data.graph, StatsView::assoc_only);
    auto full = graph_stats(data.graph, StatsView::full);
    EXPECT_GE(full.average_degree, mig.average_degree);
  }
}

TEST(Stats, DefaultGeneratorDensification) {
  auto data = generate_synthetic(SyntheticConfig{});
  auto mig = graph_stats(data.graph, StatsView::assoc_only);
  auto full = graph_stats(data.graph, StatsView::full);
  EXPECT_GE(full.average_degree, 10.0 * mig.average_degree);
}

TEST(Snapshot, RoundTrip) {
  TempDir d;
  auto data = generate_synthetic(small_config());
  save_snapshot(d.path, data.graph, &data.truth);
  Hamig g = load_snapshot(d.path);
  expect_same_graph(data.graph, g);
  auto truth = load_truth(d.path);
  ASSERT_TRUE(truth.has_value());
  ASSERT_EQ(truth->labels.size(), data.truth.labels.size());
  EXPECT_EQ(truth->flipped_count(), data.truth.flipped_count());
  EXPECT_EQ(truth->user_of, data.truth.user_of);
}

TEST(Snapshot, CorruptFeatureFile) {
  TempDir d;
  auto data = generate_synthetic(small_config());
  save_snapshot(d.path, data.graph);
  io::write_text(d.path / "features.bin", "1234567");
  EXPECT_THROW(load_snapshot(d.path), Error);
  EXPECT_FALSE(load_truth(d.path).has_value());
}

TEST(Split, StratifiedAndDisjoint) {
  std::vector<int> labels(103);
  for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = k % 3 == 0;
  auto s = stratified_split(labels, 0.2, 5);
  EXPECT_EQ(s.train.size() + s.test.size(), labels.size());
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t k = 0; k < all.size(); ++k) EXPECT_EQ(all[k], k);
  std::size_t pos_test = 0;
  for (auto k : s.test) pos_test += labels[k];
  EXPECT_EQ(pos_test, 7u);  // round(0.2 * 35)
  EXPECT_EQ(s.test.size(), 7u + 14u);
  auto again = stratified_split(labels, 0.2, 5);
  EXPECT_EQ(again.test, s.test);
}
