#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/io.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/ops.hpp"
#include "hilomix/numerics/sparse.hpp"

namespace hilomix::freq {

/// Unnormalized low/high-frequency views sharing the support of A.
struct FrequencyViews {
  SparseAdjacency lf;
  SparseAdjacency hf;
};

namespace detail {

inline void check_scorer_shapes(std::size_t h, const Matrix& w, const Matrix& b) {
  if (w.rows() != 2 * h || w.cols() != 1) {
    throw DimensionError("scorer weight " + w.shape_string() + " for embedding width " +
                         std::to_string(h));
  }
  if (b.rows() != 1 || b.cols() != 1) throw DimensionError("scorer bias must be 1x1");
}

inline void check_endpoints(std::size_t n, std::span<const Edge> edges) {
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].u >= n || edges[e].v >= n) {
      throw IndexError("score_edges: edge " + std::to_string(e) + " references node beyond " +
                       std::to_string(n));
    }
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// s_e = sigmoid(lin(h_u || h_v) + lin(h_v || h_u)) with lin(z) = z.w + b.
/// One map serves both orders, so the score is exactly symmetric.
inline std::vector<double> score_edges(const Matrix& h0, std::span<const Edge> edges,
                                       const Matrix& w, const Matrix& b) {
  const std::size_t h = h0.cols();
  detail::check_scorer_shapes(h, w, b);
  detail::check_endpoints(h0.rows(), edges);
  std::vector<double> s(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto hu = h0.row(edges[e].u), hv = h0.row(edges[e].v);
    double fwd = 0.0, rev = 0.0;
    for (std::size_t k = 0; k < h; ++k) fwd += hu[k] * w[k];
    for (std::size_t k = 0; k < h; ++k) fwd += hv[k] * w[h + k];
    for (std::size_t k = 0; k < h; ++k) rev += hv[k] * w[k];
    for (std::size_t k = 0; k < h; ++k) rev += hu[k] * w[h + k];
    s[e] = detail::stable_sigmoid((fwd + b[0]) + (rev + b[0]));
  }
  return s;
}

inline FrequencyViews split_views(const SparseAdjacency& a, std::span<const double> s) {
  if (!a.has_edge_index()) {
    throw ContractError("split_views: adjacency was not built from an undirected edge list");
  }
  if (s.size() != a.num_edges()) {
    throw ContractError("split_views: " + std::to_string(s.size()) + " scores for " +
                        std::to_string(a.num_edges()) + " edges");
  }
  std::vector<double> lf(a.nnz()), hf(a.nnz());
  const auto w = a.weights();
  const auto edge = a.entry_edge();
  for (std::size_t k = 0; k < a.nnz(); ++k) {
    lf[k] = w[k] * s[edge[k]];
    hf[k] = w[k] * (1.0 - s[edge[k]]);
  }
  return {a.with_weights(std::move(lf)), a.with_weights(std::move(hf))};
}

/// D^-1/2 A D^-1/2 with weighted degrees; isolated rows stay zero.
inline SparseAdjacency normalize_view(const SparseAdjacency& a) {
  const auto deg = a.degrees();
  std::vector<double> inv(deg.size());
  for (std::size_t i = 0; i < deg.size(); ++i) inv[i] = deg[i] > 0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  std::vector<double> w(a.weights().begin(), a.weights().end());
  const auto rows = a.entry_rows();
  const auto cols = a.col_indices();
  for (std::size_t k = 0; k < w.size(); ++k) w[k] *= inv[rows[k]] * inv[cols[k]];
  return a.with_weights(std::move(w));
}

// Tape versions. `pattern` must outlive the tape.

inline Var score_edges(const Var& h0, std::span<const Edge> edges, const Var& w,
                           const Var& b) {
  detail::check_scorer_shapes(h0.value().cols(), w.value(), b.value());
  detail::check_endpoints(h0.value().rows(), edges);
  std::vector<std::uint32_t> us(edges.size()), vs(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    us[e] = edges[e].u;
    vs[e] = edges[e].v;
  }
  Var hu = ad::gather_rows(h0, us);
  Var hv = ad::gather_rows(h0, vs);
  Var fwd = ad::add_row(ad::matmul(ad::concat_cols(hu, hv), w), b);
  Var rev = ad::add_row(ad::matmul(ad::concat_cols(hv, hu), w), b);
  return ad::sigmoid(ad::add(fwd, rev));
}

/// Per-entry weights (nnz x 1) of the normalized LF and HF views.
struct ViewWeights {
  Var lf;
  Var hf;
};

inline Var normalize_weights(const SparseAdjacency& pattern, const Var& w) {
  const auto rows = pattern.entry_rows();
  const auto cols = pattern.col_indices();
  std::vector<std::uint32_t> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
  Var inv = ad::rsqrt_or_zero(ad::segment_sum(w, r, pattern.n()));
  return ad::mul(ad::mul(w, ad::gather_rows(inv, r)), ad::gather_rows(inv, std::move(c)));
}

inline ViewWeights normalized_view_weights(const SparseAdjacency& pattern, const Var& s) {
  if (s.value().rows() != pattern.num_edges() || s.value().cols() != 1) {
    throw ContractError("normalized_view_weights: score vector " + s.value().shape_string() +
                        " for " + std::to_string(pattern.num_edges()) + " edges");
  }
  const auto edge = pattern.entry_edge();
  Var per_entry = ad::gather_rows(s, {edge.begin(), edge.end()});
  Var base = s.tape().constant(Matrix::column({pattern.weights().begin(), pattern.weights().end()}));
  Var lf = ad::mul(base, per_entry);
  Var hf = ad::mul(base, ad::affine(per_entry, -1.0, 1.0));
  return {normalize_weights(pattern, lf), normalize_weights(pattern, hf)};
}

/// Debug dump: edge_id,i,j,s
inline std::string smoothness_csv(std::span<const Edge> edges, std::span<const double> s) {
  std::string out = "edge_id,i,j,s\n";
  for (std::size_t e = 0; e < edges.size(); ++e) {
    out += std::to_string(e) + "," + std::to_string(edges[e].u) + "," +
           std::to_string(edges[e].v) + "," + io::format_double(s[e]) + "\n";
  }
  return out;
}

}  // namespace hilomix::freq
