#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "hilomix/graph/hamig.hpp"
#include "hilomix/numerics/sparse.hpp"

namespace hilomix::graph {

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double average_degree = 0.0;
  double average_clustering = 0.0;
  double density = 0.0;
};

/// Stats of a simple undirected graph. Local clustering of nodes with degree
/// below 2 counts as 0 in the average.
inline GraphStats graph_stats(std::size_t n, std::span<const Edge> edges) {
  GraphStats s;
  s.nodes = n;
  s.edges = edges.size();
  if (n == 0) return s;
  const auto adj = SparseAdjacency::from_undirected(n, edges);
  const auto& off = adj.row_offsets();
  const auto& col = adj.col_indices();
  std::vector<char> mark(n, 0);
  double clustering_sum = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t deg = off[u + 1] - off[u];
    if (deg < 2) continue;
    for (std::size_t k = off[u]; k < off[u + 1]; ++k) mark[col[k]] = 1;
    std::size_t links = 0;  // each neighbour-neighbour link seen twice
    for (std::size_t k = off[u]; k < off[u + 1]; ++k) {
      const auto v = col[k];
      for (std::size_t q = off[v]; q < off[v + 1]; ++q) links += mark[col[q]];
    }
    for (std::size_t k = off[u]; k < off[u + 1]; ++k) mark[col[k]] = 0;
    const double d = static_cast<double>(deg);
    clustering_sum += static_cast<double>(links) / (d * (d - 1.0));
  }
  const double nn = static_cast<double>(n), ne = static_cast<double>(edges.size());
  s.average_degree = 2.0 * ne / nn;
  s.average_clustering = clustering_sum / nn;
  s.density = n > 1 ? 2.0 * ne / (nn * (nn - 1.0)) : 0.0;
  return s;
}

enum class StatsView { assoc_only, full };

/// assoc_only: accounts with positive association edges (the plain MIG).
/// full: accounts and contracts with transaction edges added.
inline GraphStats graph_stats(const Hamig& g, StatsView view) {
  if (view == StatsView::assoc_only) {
    const auto e = g.positive_association_edges();
    return graph_stats(g.n_accounts(), e);
  }
  const auto e = g.structural_edges(true);
  return graph_stats(g.n_nodes(), e);
}

}  // namespace hilomix::graph
