#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "hilomix/error.hpp"
#include "hilomix/graph/features.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/graph/ingest.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::graph {

enum class NoiseMode { symmetric, heuristic };

struct SyntheticConfig {
  std::size_t n_accounts = 2000;
  std::size_t n_contracts = 8;
  std::size_t n_users = 0;  // 0: about 0.9 * n_accounts
  std::size_t tx_per_account = 10;
  std::size_t n_assoc_labels = 500;
  double positive_fraction = 0.5;
  double noise_rate = 0.2;
  NoiseMode noise_mode = NoiseMode::symmetric;
  std::size_t feature_dim = 32;
  std::uint64_t seed = 7;
};

struct TruthLabel {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  int truth = 0;
  int observed = 0;
  [[nodiscard]] bool flipped() const noexcept { return truth != observed; }
};

struct SyntheticTruth {
  std::vector<std::uint32_t> user_of;  // per account
  std::vector<TruthLabel> labels;      // aligned with Hamig::associations
  double noise_rate = 0.0;

  [[nodiscard]] std::size_t flipped_count() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](const TruthLabel& l) { return l.flipped(); }));
  }
};

struct SyntheticData {
  Hamig graph;
  SyntheticTruth truth;
  TransactionTable transactions;
};

namespace detail {

inline std::string hex_address(Rng& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s = "0x";
  for (int k = 0; k < 40; ++k) s += kHex[uniform_index(rng, 16)];
  return s;
}

}  // namespace detail

/// Planted-truth generator. Accounts of one latent user share a gas-price
/// regime, an activity window and two preferred pools. In users with several
/// accounts the first account mostly deposits and the rest mostly withdraw;
/// single-account users are balanced.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  const std::size_t na = cfg.n_accounts, nc = cfg.n_contracts;
  if (na < 2) throw ConfigError("n_accounts must be at least 2");
  if (nc < 1) throw ConfigError("n_contracts must be at least 1");
  if (!(cfg.noise_rate >= 0.0 && cfg.noise_rate < 0.5)) {
    throw ConfigError("noise_rate must lie in [0, 0.5)");
  }
  if (!(cfg.positive_fraction >= 0.0 && cfg.positive_fraction <= 1.0)) {
    throw ConfigError("positive_fraction must lie in [0, 1]");
  }
  const std::size_t nu =
      cfg.n_users ? cfg.n_users : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.9 * static_cast<double>(na))));
  if (nu > na) throw ConfigError("n_users exceeds n_accounts");
  if (cfg.tx_per_account == 0) throw ConfigError("tx_per_account must be positive");

  Rng rng = make_rng(cfg.seed, 0x5e17);

  // Users 0..nu-1 each own one account; the extra accounts go to a subset of
  // "multi" users.
  std::vector<std::uint32_t> owner(na);
  for (std::uint32_t k = 0; k < nu; ++k) owner[k] = k;
  const std::size_t extra = na - nu;
  if (extra > 0) {
    const std::size_t n_multi = std::clamp<std::size_t>(extra / 2, 1, nu);
    std::vector<std::uint32_t> users(nu);
    std::iota(users.begin(), users.end(), 0u);
    std::shuffle(users.begin(), users.end(), rng);
    for (std::size_t k = 0; k < extra; ++k) {
      owner[nu + k] = users[k < n_multi ? k : uniform_index(rng, n_multi)];
    }
  }
  // Shuffle so that account index carries no user information.
  std::vector<std::uint32_t> perm(na);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::uint32_t> user_of(na);
  for (std::size_t k = 0; k < na; ++k) user_of[perm[k]] = owner[k];

  std::vector<std::vector<std::uint32_t>> accounts_of(nu);
  for (std::uint32_t a = 0; a < na; ++a) accounts_of[user_of[a]].push_back(a);

  // Per-user behaviour.
  constexpr std::int64_t kStart = 1576454400;  // 2019-12-16
  constexpr double kDay = 86400.0;
  struct UserStyle {
    double gas = 0;
    double window_start = 0;
    std::uint32_t pool_a = 0, pool_b = 0;
  };
  std::vector<UserStyle> style(nu);
  for (auto& s : style) {
    s.gas = 20.0 + 100.0 * uniform01(rng);
    s.window_start = 1800.0 * uniform01(rng);
    s.pool_a = static_cast<std::uint32_t>(uniform_index(rng, nc));
    s.pool_b = static_cast<std::uint32_t>(nc > 1 ? (s.pool_a + 1 + uniform_index(rng, nc - 1)) % nc
                                                 : s.pool_a);
  }

  TransactionTable tx;
  std::set<std::string> used;
  for (std::size_t a = 0; a < na; ++a) {
    std::string id;
    do id = detail::hex_address(rng);
    while (!used.insert(id).second);
    tx.account_ids.push_back(std::move(id));
  }
  // Zero-padded so that id order matches index order.
  const std::size_t width = std::to_string(nc - 1).size();
  for (std::size_t c = 0; c < nc; ++c) {
    const auto num = std::to_string(c);
    tx.contract_ids.push_back("pool" + std::string(width - num.size(), '0') + num);
  }

  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::set<TxEdge> edges;
  for (std::uint32_t a = 0; a < na; ++a) {
    const auto u = user_of[a];
    const auto& mates = accounts_of[u];
    const auto& s = style[u];
    double deposit_p = 0.5;
    double volume = 1.0;
    if (mates.size() > 1) {
      const bool depositor = mates.front() == a;
      deposit_p = depositor ? 0.95 : 0.05;
      volume = depositor ? 1.5 : 0.75;
    }
    const auto base = static_cast<double>(cfg.tx_per_account) * volume;
    const auto lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.5 * base)));
    const auto hi = std::max(lo, static_cast<std::size_t>(std::ceil(1.5 * base)));
    const std::size_t n_tx = lo + uniform_index(rng, hi - lo + 1);
    for (std::size_t k = 0; k < n_tx; ++k) {
      TxEvent e;
      e.account = a;
      const double r = uniform01(rng);
      e.contract = r < 0.85 ? (r < 0.425 ? s.pool_a : s.pool_b)
                            : static_cast<std::uint32_t>(uniform_index(rng, nc));
      e.direction = uniform01(rng) < deposit_p ? Direction::deposit : Direction::withdraw;
      const double day = s.window_start + 30.0 * uniform01(rng);
      e.timestamp = kStart + static_cast<std::int64_t>(std::floor(day * kDay));
      e.gas_price = std::max(1.0, s.gas * (1.0 + 0.1 * unit_normal(rng)));
      e.value = 0.1 * std::pow(10.0, static_cast<double>(e.contract % 4));
      tx.events.push_back(e);
      edges.insert({e.account, e.contract});
    }
  }
  tx.edges.assign(edges.begin(), edges.end());

  // Planted labels.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> same_user;
  for (const auto& acc : accounts_of) {
    for (std::size_t p = 0; p < acc.size(); ++p)
      for (std::size_t q = p + 1; q < acc.size(); ++q) same_user.push_back(canonical(acc[p], acc[q]));
  }
  std::sort(same_user.begin(), same_user.end());
  const auto n_pos = static_cast<std::size_t>(
      std::llround(cfg.positive_fraction * static_cast<double>(cfg.n_assoc_labels)));
  const std::size_t n_neg = cfg.n_assoc_labels - n_pos;
  if (n_pos > same_user.size()) {
    throw ConfigError("infeasible synthetic config: " + std::to_string(n_pos) +
                      " planted positives but only " + std::to_string(same_user.size()) +
                      " same-user account pairs");
  }
  const double total_pairs = 0.5 * static_cast<double>(na) * static_cast<double>(na - 1);
  if (static_cast<double>(n_neg) > 0.5 * (total_pairs - static_cast<double>(same_user.size()))) {
    throw ConfigError("infeasible synthetic config: too many negative labels requested");
  }
  std::shuffle(same_user.begin(), same_user.end(), rng);

  std::vector<TruthLabel> labels;
  std::unordered_set<std::uint64_t> taken;
  for (std::size_t k = 0; k < n_pos; ++k) {
    const auto [a, b] = same_user[k];
    labels.push_back({a, b, 1, 1});
    taken.insert(pair_key(a, b));
  }
  while (labels.size() < cfg.n_assoc_labels) {
    const auto i = static_cast<std::uint32_t>(uniform_index(rng, na));
    const auto j = static_cast<std::uint32_t>(uniform_index(rng, na));
    if (i == j || user_of[i] == user_of[j]) continue;
    if (!taken.insert(pair_key(i, j)).second) continue;
    const auto [a, b] = canonical(i, j);
    labels.push_back({a, b, 0, 0});
  }
  std::shuffle(labels.begin(), labels.end(), rng);

  // Label noise.
  if (cfg.noise_mode == NoiseMode::symmetric) {
    std::bernoulli_distribution flip(cfg.noise_rate);
    for (auto& l : labels)
      if (flip(rng)) l.observed = 1 - l.truth;
  } else {
    // Same expected count, but flips favour pairs of busy accounts.
    std::vector<double> activity(na, 0.0);
    for (const auto& e : tx.events) activity[e.account] += 1.0;
    std::binomial_distribution<std::size_t> count(labels.size(), cfg.noise_rate);
    std::size_t k = count(rng);
    std::vector<double> w(labels.size());
    for (std::size_t p = 0; p < labels.size(); ++p) {
      w[p] = activity[labels[p].a] + activity[labels[p].b];
    }
    while (k-- > 0) {
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const std::size_t p = pick(rng);
      labels[p].observed = 1 - labels[p].truth;
      w[p] = 0.0;
    }
  }

  SyntheticData out;
  std::vector<LabeledPair> pairs;
  for (const auto& l : labels) pairs.push_back({l.a, l.b, l.observed});
  out.graph = build_hamig(tx, std::move(pairs), cfg.feature_dim);
  out.truth.user_of = std::move(user_of);
  out.truth.labels = std::move(labels);
  out.truth.noise_rate = cfg.noise_rate;
  out.transactions = std::move(tx);
  return out;
}

inline nlohmann::json truth_to_json(const SyntheticTruth& t) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : t.labels) {
    labels.push_back({{"a", l.a}, {"b", l.b}, {"truth", l.truth}, {"observed", l.observed},
                      {"flag", l.flipped() ? "flipped" : "faithful"}});
  }
  return {{"noise_rate", t.noise_rate}, {"user_of", t.user_of}, {"labels", std::move(labels)}};
}

inline SyntheticTruth truth_from_json(const nlohmann::json& j) {
  SyntheticTruth t;
  try {
    t.noise_rate = j.at("noise_rate").get<double>();
    t.user_of = j.at("user_of").get<std::vector<std::uint32_t>>();
    for (const auto& l : j.at("labels")) {
      t.labels.push_back({l.at("a").get<std::uint32_t>(), l.at("b").get<std::uint32_t>(),
                          l.at("truth").get<int>(), l.at("observed").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("truth.json: ") + e.what());
  }
  return t;
}

}  // namespace hilomix::graph
