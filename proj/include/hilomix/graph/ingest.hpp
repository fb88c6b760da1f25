#pragma once

#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/graph/features.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/io.hpp"

namespace hilomix::graph {

inline const std::vector<std::string> kTransactionHeader = {
    "account_address", "contract_id", "direction", "timestamp", "gas_price", "value"};
inline const std::vector<std::string> kAssociationHeader = {"address_a", "address_b", "label"};

/// Result of reading a transaction CSV. Accounts are indexed in order of first
/// appearance, contracts in sorted id order.
struct TransactionTable {
  std::vector<std::string> account_ids;
  std::vector<std::string> contract_ids;
  std::vector<TxEdge> edges;  // deduplicated, sorted
  std::vector<TxEvent> events;

  [[nodiscard]] std::unordered_map<std::string, std::uint32_t> account_index() const {
    std::unordered_map<std::string, std::uint32_t> m;
    for (std::uint32_t i = 0; i < account_ids.size(); ++i) m.emplace(account_ids[i], i);
    return m;
  }
};

inline Direction parse_direction(const std::string& s, const std::string& where) {
  if (s == "deposit") return Direction::deposit;
  if (s == "withdraw") return Direction::withdraw;
  throw ValidationError(where + ": unknown direction '" + s + "' (expected deposit|withdraw)");
}

inline const char* direction_name(Direction d) {
  return d == Direction::deposit ? "deposit" : "withdraw";
}

inline TransactionTable ingest_transactions(const std::filesystem::path& path) {
  io::CsvReader csv(path, kTransactionHeader);
  TransactionTable t;
  std::unordered_map<std::string, std::uint32_t> acc, con;
  std::set<TxEdge> edges;
  std::vector<std::string> row;
  while (csv.next(row)) {
    const std::string where = csv.where();
    if (row.size() != kTransactionHeader.size()) {
      throw ValidationError(where + ": expected 6 fields, got " + std::to_string(row.size()));
    }
    if (row[0].empty() || row[1].empty()) throw ValidationError(where + ": empty identifier");
    TxEvent e;
    e.direction = parse_direction(row[2], where);
    e.timestamp = io::parse_int(row[3], where, "timestamp");
    e.gas_price = io::parse_double(row[4], where, "gas_price");
    e.value = io::parse_double(row[5], where, "value");
    if (!(e.gas_price >= 0.0) || !std::isfinite(e.gas_price)) {
      throw ValidationError(where + ": gas_price must be a finite non-negative number");
    }
    if (!(e.value >= 0.0) || !std::isfinite(e.value)) {
      throw ValidationError(where + ": value must be a finite non-negative number");
    }
    auto [ai, anew] = acc.try_emplace(row[0], static_cast<std::uint32_t>(t.account_ids.size()));
    if (anew) t.account_ids.push_back(row[0]);
    auto [ci, cnew] = con.try_emplace(row[1], static_cast<std::uint32_t>(t.contract_ids.size()));
    if (cnew) t.contract_ids.push_back(row[1]);
    e.account = ai->second;
    e.contract = ci->second;
    t.events.push_back(e);
  }
  std::vector<std::uint32_t> order(t.contract_ids.size()), rank(order.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t l, std::uint32_t r) { return t.contract_ids[l] < t.contract_ids[r]; });
  std::vector<std::string> sorted_ids;
  for (std::uint32_t k = 0; k < order.size(); ++k) {
    rank[order[k]] = k;
    sorted_ids.push_back(t.contract_ids[order[k]]);
  }
  t.contract_ids = std::move(sorted_ids);
  for (auto& e : t.events) {
    e.contract = rank[e.contract];
    edges.insert({e.account, e.contract});
  }
  t.edges.assign(edges.begin(), edges.end());
  return t;
}

/// Reads labeled associations against a known account index. Pairs are
/// canonicalized and deduplicated; a pair listed twice with different labels
/// is rejected.
inline std::vector<LabeledPair> ingest_associations(
    const std::filesystem::path& path,
    const std::unordered_map<std::string, std::uint32_t>& accounts) {
  io::CsvReader csv(path, kAssociationHeader);
  std::map<std::uint64_t, std::size_t> seen;
  std::vector<LabeledPair> out;
  std::vector<std::string> row;
  while (csv.next(row)) {
    const std::string where = csv.where();
    if (row.size() != 3) {
      throw ValidationError(where + ": expected 3 fields, got " + std::to_string(row.size()));
    }
    if (row[0] == row[1]) throw ValidationError(where + ": self-association of " + row[0]);
    const auto label = io::parse_int(row[2], where, "label");
    if (label != 0 && label != 1) throw ValidationError(where + ": label must be 0 or 1");
    auto find = [&](const std::string& id) {
      auto it = accounts.find(id);
      if (it == accounts.end()) throw UnresolvedNodeError(where + ": unknown address " + id);
      return it->second;
    };
    const auto [a, b] = canonical(find(row[0]), find(row[1]));
    auto [it, fresh] = seen.try_emplace(pair_key(a, b), out.size());
    if (!fresh) {
      if (out[it->second].label != label) {
        throw ValidationError(where + ": conflicting labels for " + row[0] + "," + row[1]);
      }
      continue;
    }
    out.push_back({a, b, static_cast<int>(label)});
  }
  return out;
}

/// Assembles a HAMIG from ingested records with raw features of width `dim`.
inline Hamig build_hamig(const TransactionTable& tx, std::vector<LabeledPair> associations,
                         std::size_t dim) {
  Hamig g;
  g.account_ids = tx.account_ids;
  g.contract_ids = tx.contract_ids;
  g.tx_edges = tx.edges;
  g.associations = std::move(associations);
  g.feature_names = feature_manifest(tx.contract_ids, dim);
  g.features = extract_features(tx.events, tx.account_ids.size(), tx.contract_ids.size(), dim);
  g.validate();
  return g;
}

inline Hamig ingest(const std::filesystem::path& transactions,
                    const std::filesystem::path& associations, std::size_t dim) {
  auto tx = ingest_transactions(transactions);
  auto pairs = ingest_associations(associations, tx.account_index());
  return build_hamig(tx, std::move(pairs), dim);
}

inline std::string transactions_csv(const TransactionTable& t) {
  std::string out;
  for (std::size_t k = 0; k < kTransactionHeader.size(); ++k) {
    out += (k ? "," : "") + kTransactionHeader[k];
  }
  out += '\n';
  for (const auto& e : t.events) {
    out += t.account_ids[e.account] + "," + t.contract_ids[e.contract] + "," +
           direction_name(e.direction) + "," + std::to_string(e.timestamp) + "," +
           io::format_double(e.gas_price) + "," + io::format_double(e.value) + "\n";
  }
  return out;
}

inline std::string associations_csv(const std::vector<std::string>& account_ids,
                                    const std::vector<LabeledPair>& pairs) {
  std::string out = "address_a,address_b,label\n";
  for (const auto& p : pairs) {
    out += account_ids[p.a] + "," + account_ids[p.b] + "," + std::to_string(p.label) + "\n";
  }
  return out;
}

}  // namespace hilomix::graph
