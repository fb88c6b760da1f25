#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/numerics/matrix.hpp"

namespace hilomix::graph {

enum class Direction : std::uint8_t { deposit, withdraw };

/// One mixer interaction of an account.
struct TxEvent {
  std::uint32_t account = 0;
  std::uint32_t contract = 0;
  Direction direction = Direction::deposit;
  std::int64_t timestamp = 0;  // unix seconds
  double gas_price = 0.0;      // gwei
  double value = 0.0;          // native units
  friend bool operator==(const TxEvent&, const TxEvent&) = default;
};

/// Width of the extracted layout before zero padding.
inline std::size_t base_feature_width(std::size_t n_contracts) { return 2 * n_contracts + 16; }

/// Column names of the account feature layout, padded to `dim`.
inline std::vector<std::string> feature_manifest(const std::vector<std::string>& contract_ids,
                                                 std::size_t dim) {
  std::vector<std::string> names;
  for (const auto& c : contract_ids) names.push_back("deposits@" + c);
  for (const auto& c : contract_ids) names.push_back("withdrawals@" + c);
  for (const char* n :
       {"tx_count", "deposit_count", "withdraw_count", "first_seen_days", "last_seen_days",
        "deposit_share", "inter_event_mean_days", "inter_event_std_days",
        "inter_event_min_days", "gas_mean", "gas_std", "gas_min", "gas_max", "value_deposited",
        "value_withdrawn", "has_events"}) {
    names.emplace_back(n);
  }
  if (dim < names.size()) {
    throw ConfigError("feature_dim " + std::to_string(dim) + " is below the " +
                      std::to_string(names.size()) + " columns required for " +
                      std::to_string(contract_ids.size()) + " contracts");
  }
  for (std::size_t k = names.size(); k < dim; ++k) names.push_back("pad_" + std::to_string(k));
  return names;
}

/// Raw per-account interaction statistics (n_accounts x dim). Accounts with no
/// events get an all-zero row, including the has_events flag.
inline Matrix extract_features(std::span<const TxEvent> events, std::size_t n_accounts,
                               std::size_t n_contracts, std::size_t dim) {
  const std::size_t base = base_feature_width(n_contracts);
  if (dim < base) {
    throw ConfigError("feature_dim " + std::to_string(dim) + " < required " +
                      std::to_string(base));
  }
  std::vector<std::vector<TxEvent>> per_account(n_accounts);
  for (const auto& e : events) {
    if (e.account >= n_accounts) throw IndexError("extract_features: account out of range");
    if (e.contract >= n_contracts) throw IndexError("extract_features: contract out of range");
    per_account[e.account].push_back(e);
  }
  constexpr double kDay = 86400.0;
  Matrix x(n_accounts, dim);
  for (std::size_t a = 0; a < n_accounts; ++a) {
    auto& ev = per_account[a];
    if (ev.empty()) continue;
    // Canonical order makes every floating-point sum independent of input order.
    std::sort(ev.begin(), ev.end(), [](const TxEvent& l, const TxEvent& r) {
      return std::tie(l.timestamp, l.contract, l.direction, l.gas_price, l.value) <
             std::tie(r.timestamp, r.contract, r.direction, r.gas_price, r.value);
    });
    auto row = x.row(a);
    double deposits = 0, withdrawals = 0, val_dep = 0, val_wd = 0;
    double gas_sum = 0, gas_min = std::numeric_limits<double>::infinity(), gas_max = -gas_min;
    for (const auto& e : ev) {
      if (e.direction == Direction::deposit) {
        row[e.contract] += 1.0;
        deposits += 1.0;
        val_dep += e.value;
      } else {
        row[n_contracts + e.contract] += 1.0;
        withdrawals += 1.0;
        val_wd += e.value;
      }
      gas_sum += e.gas_price;
      gas_min = std::min(gas_min, e.gas_price);
      gas_max = std::max(gas_max, e.gas_price);
    }
    const double n = static_cast<double>(ev.size());
    const double gas_mean = gas_sum / n;
    double gas_var = 0;
    for (const auto& e : ev) gas_var += (e.gas_price - gas_mean) * (e.gas_price - gas_mean);
    gas_var /= n;

    double iet_mean = 0, iet_std = 0, iet_min = 0;
    if (ev.size() > 1) {
      std::vector<double> gaps;
      for (std::size_t k = 1; k < ev.size(); ++k) {
        gaps.push_back(static_cast<double>(ev[k].timestamp - ev[k - 1].timestamp) / kDay);
      }
      for (double g : gaps) iet_mean += g;
      iet_mean /= static_cast<double>(gaps.size());
      for (double g : gaps) iet_std += (g - iet_mean) * (g - iet_mean);
      iet_std = std::sqrt(iet_std / static_cast<double>(gaps.size()));
      iet_min = *std::min_element(gaps.begin(), gaps.end());
    }
    const double first = static_cast<double>(ev.front().timestamp) / kDay;
    const double last = static_cast<double>(ev.back().timestamp) / kDay;

    std::size_t c = 2 * n_contracts;
    for (double v : {n, deposits, withdrawals, first, last, deposits / n, iet_mean, iet_std,
                     iet_min, gas_mean, std::sqrt(gas_var), gas_min, gas_max, val_dep, val_wd,
                     1.0}) {
      row[c++] = v;
    }
  }
  return x;
}

/// Per-column zero-mean / unit-variance copy (population statistics).
/// Constant columns become all zeros.
inline Matrix standardize_columns(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  if (x.rows() == 0) return out;
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= n;
    double var = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) continue;
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) = (x(i, j) - mean) / sd;
  }
  return out;
}

/// Feature matrix over all nodes: standardized account rows followed by one
/// row per contract carrying a one-hot marker at column (contract mod dim).
inline Matrix node_feature_matrix(const Hamig& g) {
  const std::size_t d = g.feature_dim();
  Matrix z = standardize_columns(g.features);
  Matrix x(g.n_nodes(), d);
  for (std::size_t i = 0; i < g.n_accounts(); ++i) {
    std::copy(z.row(i).begin(), z.row(i).end(), x.row(i).begin());
  }
  if (d > 0) {
    for (std::size_t c = 0; c < g.n_contracts(); ++c) x(g.n_accounts() + c, c % d) = 1.0;
  }
  return x;
}

}  // namespace hilomix::graph
