#pragma once

// Differentiable primitives recorded on a Tape. Each op computes its forward
// value eagerly and registers a closure that maps the output gradient onto
// its inputs' gradient sinks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/sparse.hpp"
#include "hilomix/numerics/tape.hpp"

namespace hilomix::ad {

namespace detail {

inline Tape& common_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("ad: operands live on different tapes");
  return a.tape();
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  Matrix y = hilomix::matmul(a.value(), b.value());
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) *ga += hilomix::matmul_nt(g, b.value());
    if (Matrix* gb = tp.grad_sink(b)) *gb += hilomix::matmul_tn(a.value(), g);
  });
}

/// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  Matrix y = hilomix::matmul_nt(a.value(), b.value());
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) *ga += hilomix::matmul(g, b.value());
    if (Matrix* gb = tp.grad_sink(b)) *gb += hilomix::matmul_tn(g, a.value());
  });
}

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  a.value().require_same_shape(b.value(), "ad::add");
  Matrix y = a.value() + b.value();
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) *ga += g;
    if (Matrix* gb = tp.grad_sink(b)) *gb += g;
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  a.value().require_same_shape(b.value(), "ad::sub");
  Matrix y = a.value() - b.value();
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) *ga += g;
    if (Matrix* gb = tp.grad_sink(b)) *gb -= g;
  });
}

/// Adds a 1 x c row to every row of a.
inline Var add_row(const Var& a, const Var& row) {
  Tape& t = detail::common_tape(a, row);
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw DimensionError("ad::add_row: " + x.shape_string() + " + " + r.shape_string());
  }
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += r(0, j);
  return t.record(std::move(y), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) *ga += g;
    if (Matrix* gr = tp.grad_sink(row)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)(0, j) += g(i, j);
    }
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  a.value().require_same_shape(b.value(), "ad::mul");
  Matrix y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] *= b.value()[k];
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) {
      for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * b.value()[k];
    }
    if (Matrix* gb = tp.grad_sink(b)) {
      for (std::size_t k = 0; k < g.size(); ++k) (*gb)[k] += g[k] * a.value()[k];
    }
  });
}

/// k * a
inline Var scale(const Var& a, double k) {
  Tape& t = a.tape();
  Matrix y = a.value() * k;
  return t.record(std::move(y), {a}, [a, k](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += k * g[i];
    }
  });
}

/// k * a + c, elementwise.
inline Var affine(const Var& a, double k, double c) {
  Tape& t = a.tape();
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = k * y[i] + c;
  return t.record(std::move(y), {a}, [a, k](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += k * g[i];
    }
  });
}

inline Var sigmoid(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x[k];
    y[k] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record(std::move(y), {a}, [a, self](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& s = tp.value(self);
    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * s[k] * (1.0 - s[k]);
  });
}

inline Var tanh(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::tanh(x[k]);
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record(std::move(y), {a}, [a, self](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& y = tp.value(self);
    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * (1.0 - y[k] * y[k]);
  });
}

inline Var exp(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::exp(x[k]);
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record(std::move(y), {a}, [a, self](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& y = tp.value(self);
    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * y[k];
  });
}

/// Natural log; throws DomainError on any entry <= 0.
inline Var log(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0)) {
      throw DomainError("ad::log: non-positive input " + std::to_string(x[k]) + " at index " +
                        std::to_string(k));
    }
    y[k] = std::log(x[k]);
  }
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& xv = a.value();
    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] / xv[k];
  });
}

/// x^(-1/2) for x > 0 and 0 for x == 0 (isolated nodes in degree normalization).
inline Var rsqrt_or_zero(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] < 0.0) throw DomainError("ad::rsqrt_or_zero: negative input");
    y[k] = x[k] > 0.0 ? 1.0 / std::sqrt(x[k]) : 0.0;
  }
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record(std::move(y), {a}, [a, self](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& y = tp.value(self);
    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * -0.5 * y[k] * y[k] * y[k];
  });
}

/// max(a, lo); entries at the floor pass no gradient.
inline Var clamp_min(const Var& a, double lo) {
  const Matrix& x = a.value();
  Matrix y = x;
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::max(y[k], lo);
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [a, lo](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& xv = a.value();
    for (std::size_t k = 0; k < g.size(); ++k)
      if (xv[k] > lo) (*ga)[k] += g[k];
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  const Matrix& x = a.value();
  const Matrix& z = b.value();
  if (x.rows() != z.rows()) {
    throw DimensionError("ad::concat_cols: " + x.shape_string() + " | " + z.shape_string());
  }
  const std::size_t ca = x.cols(), cb = z.cols();
  Matrix y(x.rows(), ca + cb);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) y(i, j) = x(i, j);
    for (std::size_t j = 0; j < cb; ++j) y(i, ca + j) = z(i, j);
  }
  return t.record(std::move(y), {a, b}, [a, b, ca, cb](Tape& tp, const Matrix& g) {
    if (Matrix* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < ca; ++j) (*ga)(i, j) += g(i, j);
    }
    if (Matrix* gb = tp.grad_sink(b)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < cb; ++j) (*gb)(i, j) += g(i, ca + j);
    }
  });
}

/// out[k] = a[index[k]]
inline Var gather_rows(const Var& a, std::vector<std::uint32_t> index) {
  const Matrix& x = a.value();
  Matrix y(index.size(), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= x.rows()) {
      throw IndexError("ad::gather_rows: index " + std::to_string(index[k]) + " >= " +
                       std::to_string(x.rows()));
    }
    const auto src = x.row(index[k]);
    std::copy(src.begin(), src.end(), y.row(k).begin());
  }
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [a, index = std::move(index)](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    for (std::size_t k = 0; k < index.size(); ++k) {
      auto dst = ga->row(index[k]);
      const auto src = g.row(k);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

/// out[segment[k]] += a[k], with `n` output rows.
inline Var segment_sum(const Var& a, std::vector<std::uint32_t> segment, std::size_t n) {
  const Matrix& x = a.value();
  if (segment.size() != x.rows()) throw DimensionError("ad::segment_sum: segment length");
  Matrix y(n, x.cols());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    if (segment[k] >= n) throw IndexError("ad::segment_sum: segment id out of range");
    auto dst = y.row(segment[k]);
    const auto src = x.row(k);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [a, segment = std::move(segment)](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    for (std::size_t k = 0; k < segment.size(); ++k) {
      auto dst = ga->row(k);
      const auto src = g.row(segment[k]);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  Tape& t = a.tape();
  return t.record(Matrix::scalar(s), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const double gv = g[0];
    for (double& v : ga->values()) v += gv;
  });
}

inline Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("ad::mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// n x c -> n x 1 row sums.
inline Var row_sum(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    y(i, 0) = s;
  }
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (double& v : ga->row(i)) v += g(i, 0);
  });
}

/// Row-wise log-softmax, computed with the max-shift for stability.
inline Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (double v : r) m = std::max(m, v);
    double s = 0.0;
    for (double v : r) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < r.size(); ++j) y(i, j) = r[j] - lse;
  }
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record(std::move(y), {a}, [a, self](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    const Matrix& y = tp.value(self);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (double v : g.row(i)) gs += v;
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

/// out[i] = a[i, column[i]], n x 1.
inline Var pick(const Var& a, std::vector<std::uint32_t> column) {
  const Matrix& x = a.value();
  if (column.size() != x.rows()) throw DimensionError("ad::pick: one column per row required");
  Matrix y(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (column[i] >= x.cols()) throw IndexError("ad::pick: column out of range");
    y(i, 0) = x(i, column[i]);
  }
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [a, column = std::move(column)](Tape& tp, const Matrix& g) {
    Matrix* ga = tp.grad_sink(a);
    if (ga == nullptr) return;
    for (std::size_t i = 0; i < column.size(); ++i) (*ga)(i, column[i]) += g(i, 0);
  });
}

/// Scales every row to unit L2 norm; a zero row raises DegenerateInputError.
inline Var normalize_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    const double nrm = std::sqrt(s);
    if (!(nrm > 0.0)) {
      throw DegenerateInputError("normalize_rows: zero-norm row " + std::to_string(i));
    }
    norms[i] = nrm;
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = x(i, j) / nrm;
  }
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record(std::move(y), {a},
                  [a, self, norms = std::move(norms)](Tape& tp, const Matrix& g) {
                    Matrix* ga = tp.grad_sink(a);
                    if (ga == nullptr) return;
                    const Matrix& y = tp.value(self);
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        (*ga)(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
                    }
                  });
}

/// Row-wise cosine similarity of two equally shaped matrices, n x 1.
inline Var cosine_rows(const Var& a, const Var& b) {
  return row_sum(mul(normalize_rows(a), normalize_rows(b)));
}

/// Pairwise cosine similarity matrix: out[i][j] = cos(a_i, b_j).
inline Var cosine_matrix(const Var& a, const Var& b) {
  return matmul_nt(normalize_rows(a), normalize_rows(b));
}

/// adj * h with constant adjacency weights. `adj` must outlive the tape.
inline Var spmm(const SparseAdjacency& adj, const Var& h) {
  Matrix y = hilomix::spmm(adj, h.value());
  Tape& t = h.tape();
  return t.record(std::move(y), {h}, [&adj, h](Tape& tp, const Matrix& g) {
    Matrix* gh = tp.grad_sink(h);
    if (gh == nullptr) return;
    const auto offs = adj.row_offsets();
    const auto cols = adj.col_indices();
    const auto w = adj.weights();
    for (std::size_t r = 0; r < adj.n(); ++r) {
      const auto gr = g.row(r);
      for (std::size_t k = offs[r]; k < offs[r + 1]; ++k) {
        auto dst = gh->row(cols[k]);
        for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += w[k] * gr[j];
      }
    }
  });
}

/// adj * h where the per-entry weights (nnz x 1) are themselves tape values;
/// only the sparsity pattern of `pattern` is used.
inline Var spmm(const SparseAdjacency& pattern, const Var& weights, const Var& h) {
  Tape& t = detail::common_tape(weights, h);
  const Matrix& w = weights.value();
  const Matrix& x = h.value();
  if (w.rows() != pattern.nnz() || w.cols() != 1) {
    throw DimensionError("ad::spmm: weights " + w.shape_string() + " for nnz=" +
                         std::to_string(pattern.nnz()));
  }
  if (pattern.n() != x.rows()) {
    throw DimensionError("ad::spmm: adjacency n=" + std::to_string(pattern.n()) + " vs H " +
                         x.shape_string());
  }
  const auto offs = pattern.row_offsets();
  const auto cols = pattern.col_indices();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < pattern.n(); ++r) {
    auto o = y.row(r);
    for (std::size_t k = offs[r]; k < offs[r + 1]; ++k) {
      const auto hr = x.row(cols[k]);
      for (std::size_t j = 0; j < hr.size(); ++j) o[j] += w[k] * hr[j];
    }
  }
  return t.record(std::move(y), {weights, h}, [&pattern, weights, h](Tape& tp, const Matrix& g) {
    const auto offs = pattern.row_offsets();
    const auto cols = pattern.col_indices();
    Matrix* gw = tp.grad_sink(weights);
    Matrix* gh = tp.grad_sink(h);
    const Matrix& wv = weights.value();
    const Matrix& xv = h.value();
    for (std::size_t r = 0; r < pattern.n(); ++r) {
      const auto gr = g.row(r);
      for (std::size_t k = offs[r]; k < offs[r + 1]; ++k) {
        if (gw != nullptr) {
          const auto hr = xv.row(cols[k]);
          double d = 0.0;
          for (std::size_t j = 0; j < gr.size(); ++j) d += gr[j] * hr[j];
          (*gw)(k, 0) += d;
        }
        if (gh != nullptr) {
          auto dst = gh->row(cols[k]);
          for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += wv[k] * gr[j];
        }
      }
    }
  });
}

}  // namespace hilomix::ad

namespace hilomix {

/// Row-wise softmax of plain values.
inline Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (double v : r) m = std::max(m, v);
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += (y(i, j) = std::exp(r[j] - m));
    for (std::size_t j = 0; j < r.size(); ++j) y(i, j) /= s;
  }
  return y;
}

}  // namespace hilomix
