#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/sparse.hpp"

namespace hilomix::graph {

/// Account <-> contract interaction edge. `contract` is the contract's own
/// index (0..n_contracts); its node index is n_accounts + contract.
struct TxEdge {
  std::uint32_t account = 0;
  std::uint32_t contract = 0;
  friend auto operator<=>(const TxEdge&, const TxEdge&) = default;
};

/// Undirected account-account association with its observed label. Stored
/// canonically with a < b.
struct LabeledPair {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  int label = 1;
  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

inline std::pair<std::uint32_t, std::uint32_t> canonical(std::uint32_t i, std::uint32_t j) {
  return i < j ? std::pair{i, j} : std::pair{j, i};
}

inline std::uint64_t pair_key(std::uint32_t i, std::uint32_t j) {
  const auto [a, b] = canonical(i, j);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

/// Heterogeneous attributed mixing interaction graph.
///
/// Node indexing: accounts occupy [0, n_accounts), contracts follow.
/// `features` holds the raw (unstandardized) account features.
struct Hamig {
  std::vector<std::string> account_ids;
  std::vector<std::string> contract_ids;
  std::vector<TxEdge> tx_edges;
  std::vector<LabeledPair> associations;
  Matrix features;
  std::vector<std::string> feature_names;

  [[nodiscard]] std::size_t n_accounts() const noexcept { return account_ids.size(); }
  [[nodiscard]] std::size_t n_contracts() const noexcept { return contract_ids.size(); }
  [[nodiscard]] std::size_t n_nodes() const noexcept { return n_accounts() + n_contracts(); }
  [[nodiscard]] std::size_t feature_dim() const noexcept { return features.cols(); }
  [[nodiscard]] std::uint32_t contract_node(std::uint32_t c) const noexcept {
    return static_cast<std::uint32_t>(n_accounts() + c);
  }

  /// Associations observed as positive; these are the structural E_aa edges.
  [[nodiscard]] std::vector<Edge> positive_association_edges() const {
    std::vector<Edge> out;
    for (const auto& p : associations)
      if (p.label == 1) out.push_back({p.a, p.b});
    return out;
  }

  /// Undirected edge list over all nodes: transaction edges then positive
  /// association edges.
  [[nodiscard]] std::vector<Edge> structural_edges(bool include_transactions = true) const {
    std::vector<Edge> out;
    if (include_transactions) {
      out.reserve(tx_edges.size());
      for (const auto& e : tx_edges) out.push_back({e.account, contract_node(e.contract)});
    }
    for (const auto& e : positive_association_edges()) out.push_back(e);
    return out;
  }

  /// Throws ValidationError describing the first violated invariant.
  void validate() const {
    const auto na = static_cast<std::uint32_t>(n_accounts());
    const auto nc = static_cast<std::uint32_t>(n_contracts());
    std::set<TxEdge> seen_tx;
    for (const auto& e : tx_edges) {
      if (e.account >= na || e.contract >= nc) {
        throw ValidationError("Hamig: transaction edge endpoint out of range");
      }
      if (!seen_tx.insert(e).second) throw ValidationError("Hamig: duplicate transaction edge");
    }
    std::set<std::uint64_t> seen_aa;
    for (const auto& p : associations) {
      if (p.a >= na || p.b >= na) throw ValidationError("Hamig: association endpoint out of range");
      if (p.a == p.b) throw ValidationError("Hamig: self-association");
      if (p.a > p.b) throw ValidationError("Hamig: association not stored canonically");
      if (p.label != 0 && p.label != 1) throw ValidationError("Hamig: label must be 0 or 1");
      if (!seen_aa.insert(pair_key(p.a, p.b)).second) {
        throw ValidationError("Hamig: duplicate association");
      }
    }
    if (features.rows() != n_accounts()) {
      throw ValidationError("Hamig: feature rows " + std::to_string(features.rows()) +
                            " != accounts " + std::to_string(n_accounts()));
    }
    if (feature_names.size() != features.cols()) {
      throw ValidationError("Hamig: feature name count does not match feature width");
    }
    if (!features.all_finite()) throw ValidationError("Hamig: non-finite feature value");
  }

  /// Copy whose labeled associations are restricted to `keep` (indices into
  /// `associations`).
  [[nodiscard]] Hamig with_associations(const std::vector<std::size_t>& keep) const {
    Hamig g = *this;
    g.associations.clear();
    for (std::size_t k : keep) g.associations.push_back(associations.at(k));
    return g;
  }
};

}  // namespace hilomix::graph
