#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"

namespace hilomix {

/// Undirected edge between two node indices.
struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Compressed-sparse-row adjacency.
///
/// When built from an undirected edge list every stored entry also remembers
/// which undirected edge it came from (`entry_edge`), so per-edge quantities
/// such as smoothness scores can be scattered onto both directions.
class SparseAdjacency {
 public:
  SparseAdjacency() = default;

  /// Symmetric adjacency with entries (u,v,w) and (v,u,w) for each edge.
  static SparseAdjacency from_undirected(std::size_t n, std::span<const Edge> edges,
                                         std::span<const double> weights = {}) {
    if (!weights.empty() && weights.size() != edges.size()) {
      throw ContractError("SparseAdjacency: " + std::to_string(weights.size()) +
                          " weights for " + std::to_string(edges.size()) + " edges");
    }
    struct Entry {
      std::uint32_t row, col, edge;
    };
    std::vector<Entry> entries;
    entries.reserve(edges.size() * 2);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [u, v] = edges[e];
      if (u >= n || v >= n) {
        throw IndexError("SparseAdjacency: edge " + std::to_string(e) + " (" + std::to_string(u) +
                         "," + std::to_string(v) + ") out of range for n=" + std::to_string(n));
      }
      if (u == v) throw ContractError("SparseAdjacency: self-loop in undirected edge list");
      entries.push_back({u, v, static_cast<std::uint32_t>(e)});
      entries.push_back({v, u, static_cast<std::uint32_t>(e)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t k = 1; k < entries.size(); ++k) {
      if (entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
        throw ContractError("SparseAdjacency: duplicate undirected edge (" +
                            std::to_string(entries[k].row) + "," + std::to_string(entries[k].col) +
                            ")");
      }
    }
    SparseAdjacency a;
    a.n_ = n;
    a.symmetric_ = true;
    a.num_edges_ = edges.size();
    a.row_offsets_.assign(n + 1, 0);
    a.cols_.reserve(entries.size());
    a.entry_edge_.reserve(entries.size());
    a.weights_.reserve(entries.size());
    for (const auto& en : entries) {
      ++a.row_offsets_[en.row + 1];
      a.cols_.push_back(en.col);
      a.entry_edge_.push_back(en.edge);
      a.weights_.push_back(weights.empty() ? 1.0 : weights[en.edge]);
    }
    std::partial_sum(a.row_offsets_.begin(), a.row_offsets_.end(), a.row_offsets_.begin());
    a.rows_of_entries_.resize(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) a.rows_of_entries_[k] = entries[k].row;
    return a;
  }

  /// General CSR from (row, col, weight) triplets; duplicates are summed.
  static SparseAdjacency from_triplets(std::size_t n,
                                       std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> t,
                                       bool symmetric) {
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                              : std::get<1>(a) < std::get<1>(b);
    });
    SparseAdjacency a;
    a.n_ = n;
    a.symmetric_ = symmetric;
    a.row_offsets_.assign(n + 1, 0);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const auto [r, c, w] = t[k];
      if (r >= n || c >= n) throw IndexError("SparseAdjacency: triplet out of range");
      if (!a.cols_.empty() && a.rows_of_entries_.back() == r && a.cols_.back() == c) {
        a.weights_.back() += w;
        continue;
      }
      a.cols_.push_back(c);
      a.weights_.push_back(w);
      a.rows_of_entries_.push_back(r);
      ++a.row_offsets_[r + 1];
    }
    std::partial_sum(a.row_offsets_.begin(), a.row_offsets_.end(), a.row_offsets_.begin());
    a.validate();
    return a;
  }

  /// Same sparsity pattern, new per-entry weights.
  [[nodiscard]] SparseAdjacency with_weights(std::vector<double> w) const {
    if (w.size() != weights_.size()) {
      throw ContractError("SparseAdjacency::with_weights: length mismatch");
    }
    SparseAdjacency a = *this;
    a.weights_ = std::move(w);
    return a;
  }

  [[nodiscard]] std::size_t n() const noexcept { return n_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return cols_.size(); }
  [[nodiscard]] std::size_t num_edges() const noexcept { return num_edges_; }
  [[nodiscard]] bool symmetric() const noexcept { return symmetric_; }
  [[nodiscard]] bool has_edge_index() const noexcept { return !entry_edge_.empty() || nnz() == 0; }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::uint32_t> col_indices() const noexcept { return cols_; }
  std::span<const std::uint32_t> entry_rows() const noexcept { return rows_of_entries_; }
  std::span<const std::uint32_t> entry_edge() const noexcept { return entry_edge_; }
  std::span<const double> weights() const noexcept { return weights_; }

  /// Weighted degree of every node.
  [[nodiscard]] std::vector<double> degrees() const {
    std::vector<double> d(n_, 0.0);
    for (std::size_t k = 0; k < nnz(); ++k) d[rows_of_entries_[k]] += weights_[k];
    return d;
  }

  [[nodiscard]] Matrix densify() const {
    Matrix m(n_, n_);
    for (std::size_t k = 0; k < nnz(); ++k) m(rows_of_entries_[k], cols_[k]) += weights_[k];
    return m;
  }

  /// Throws ContractError if any structural invariant is violated.
  void validate() const {
    if (row_offsets_.size() != n_ + 1 || row_offsets_.back() != cols_.size()) {
      throw ContractError("SparseAdjacency: inconsistent row offsets");
    }
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        if (cols_[k] >= n_) throw ContractError("SparseAdjacency: column out of range");
        if (k > row_offsets_[r] && cols_[k] <= cols_[k - 1]) {
          throw ContractError("SparseAdjacency: columns not strictly sorted in row " +
                              std::to_string(r));
        }
        if (!(weights_[k] >= 0.0)) throw ContractError("SparseAdjacency: negative weight");
      }
    }
    if (symmetric_) {
      for (std::size_t r = 0; r < n_; ++r) {
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
          const double* w = find(cols_[k], static_cast<std::uint32_t>(r));
          if (w == nullptr || *w != weights_[k]) {
            throw ContractError("SparseAdjacency: symmetric flag set but entry (" +
                                std::to_string(r) + "," + std::to_string(cols_[k]) +
                                ") has no mirror");
          }
        }
      }
    }
  }

  [[nodiscard]] const double* find(std::uint32_t r, std::uint32_t c) const {
    const auto begin = cols_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]);
    const auto end = cols_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]);
    const auto it = std::lower_bound(begin, end, c);
    if (it == end || *it != c) return nullptr;
    return &weights_[static_cast<std::size_t>(it - cols_.begin())];
  }

 private:
  std::size_t n_ = 0;
  std::size_t num_edges_ = 0;
  bool symmetric_ = false;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<std::uint32_t> rows_of_entries_;
  std::vector<std::uint32_t> entry_edge_;
  std::vector<double> weights_;
};

/// out = adj * h using the adjacency's stored weights.
inline Matrix spmm(const SparseAdjacency& adj, const Matrix& h) {
  if (adj.n() != h.rows()) {
    throw DimensionError("spmm: adjacency n=" + std::to_string(adj.n()) + " vs H " +
                         h.shape_string());
  }
  Matrix out(h.rows(), h.cols());
  const auto offs = adj.row_offsets();
  const auto cols = adj.col_indices();
  const auto w = adj.weights();
  const std::size_t c = h.cols();
  for (std::size_t i = 0; i < adj.n(); ++i) {
    double* o = out.data() + i * c;
    for (std::size_t k = offs[i]; k < offs[i + 1]; ++k) {
      const double* hr = h.data() + cols[k] * c;
      const double wk = w[k];
      for (std::size_t j = 0; j < c; ++j) o[j] += wk * hr[j];
    }
  }
  return out;
}

}  // namespace hilomix
