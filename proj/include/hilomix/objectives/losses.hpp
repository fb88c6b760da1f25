#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/ops.hpp"

namespace hilomix::obj {

inline constexpr double kClampEps = 1e-12;

// ---- contrastive ------------------------------------------------------------

/// Mean over rows i of -log softmax_j(cos(a_i, b_j) / tau) evaluated at j = i.
inline double infonce_direction(const Matrix& a, const Matrix& b, double tau) {
  a.require_same_shape(b, "infonce_direction");
  if (!(tau > 0)) throw ConfigError("temperature must be positive");
  const std::size_t n = a.rows();
  if (n == 0) return 0.0;
  auto norms = [](const Matrix& m) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0;
      for (double v : m.row(i)) s += v * v;
      if (!(s > 0)) throw DegenerateInputError("infonce: zero-norm embedding row " + std::to_string(i));
      out[i] = std::sqrt(s);
    }
    return out;
  };
  const auto na = norms(a), nb = norms(b);
  double total = 0.0;
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) d += a(i, k) * b(j, k);
      z[j] = d / (na[i] * nb[j]) / tau;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) s += std::exp(v - m);
    total += -(z[i] - m - std::log(s));
  }
  return total / static_cast<double>(n);
}

inline double contrastive_loss(const Matrix& lf, const Matrix& hf, double tau) {
  return 0.5 * (infonce_direction(lf, hf, tau) + infonce_direction(hf, lf, tau));
}

inline Var infonce_direction(const Var& a, const Var& b, double tau) {
  if (!(tau > 0)) throw ConfigError("temperature must be positive");
  const std::size_t n = a.value().rows();
  Var logits = ad::scale(ad::cosine_matrix(a, b), 1.0 / tau);
  std::vector<std::uint32_t> diag(n);
  for (std::uint32_t i = 0; i < n; ++i) diag[i] = i;
  return ad::scale(ad::mean(ad::pick(ad::log_softmax_rows(logits), std::move(diag))), -1.0);
}

inline Var contrastive_loss(const Var& lf, const Var& hf, double tau) {
  return ad::scale(ad::add(infonce_direction(lf, hf, tau), infonce_direction(hf, lf, tau)), 0.5);
}

// ---- mutual loss and partition ---------------------------------------------

struct MutualLoss {
  std::vector<double> values;
  std::size_t clamped = 0;  // probabilities that hit the clamp floor
};

/// -log(p_lf[y] * p_hf[y]) per labeled pair. With `literal_label_factor` the
/// value is additionally multiplied by y, which zeroes negative labels.
inline MutualLoss mutual_loss(const Matrix& p_lf, const Matrix& p_hf, std::span<const int> labels,
                              bool literal_label_factor = false, double eps = kClampEps) {
  p_lf.require_same_shape(p_hf, "mutual_loss");
  if (p_lf.rows() != labels.size() || p_lf.cols() != 2) {
    throw DimensionError("mutual_loss: probabilities " + p_lf.shape_string() + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  MutualLoss out;
  out.values.resize(labels.size());
  for (std::size_t e = 0; e < labels.size(); ++e) {
    const int y = labels[e];
    if (y != 0 && y != 1) throw ValidationError("mutual_loss: label must be 0 or 1");
    double a = p_lf(e, static_cast<std::size_t>(y)), b = p_hf(e, static_cast<std::size_t>(y));
    if (a < eps) a = eps, ++out.clamped;
    if (b < eps) b = eps, ++out.clamped;
    const double v = -(std::log(a) + std::log(b));
    out.values[e] = literal_label_factor ? y * v : v;
  }
  return out;
}

/// q-quantile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ContractError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("percentile parameter outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

/// 1 - t / (2 T_max): both the loss percentile and the flip threshold.
inline double schedule(int t, int t_max) {
  if (t_max < 1) throw ConfigError("T_max must be >= 1");
  if (t < 0 || t > t_max) throw ContractError("epoch index outside [0, T_max]");
  return 1.0 - static_cast<double>(t) / (2.0 * static_cast<double>(t_max));
}

enum class LabelSet : std::uint8_t { clean, flipped, remaining };

inline const char* label_set_name(LabelSet s) {
  switch (s) {
    case LabelSet::clean: return "cl";
    case LabelSet::flipped: return "cf";
    default: return "re";
  }
}

struct LabelPartition {
  int epoch = 0;
  double percentile_param = 1.0;
  double loss_threshold = 0.0;  // percentile of L_mul
  double loss_mean = 0.0;
  double flip_threshold = 1.0;
  std::vector<LabelSet> set;
  std::vector<int> target;       // training label: y, or c for flipped
  std::vector<double> weight;    // 1, mu, or 0.5
  std::vector<double> mu;        // confidence sqrt(p_lf[c] p_hf[c]); 0 unless flipped

  [[nodiscard]] std::size_t count(LabelSet s) const {
    return static_cast<std::size_t>(std::count(set.begin(), set.end(), s));
  }
  [[nodiscard]] std::size_t size() const noexcept { return set.size(); }
};

inline std::size_t argmax2(std::span<const double> p) { return p[1] > p[0] ? 1 : 0; }

inline LabelPartition partition_labels(std::span<const double> l_mul, const Matrix& p_lf,
                                       const Matrix& p_hf, std::span<const int> labels, int t,
                                       int t_max) {
  const std::size_t n = labels.size();
  if (l_mul.size() != n || p_lf.rows() != n || p_hf.rows() != n) {
    throw DimensionError("partition_labels: inconsistent lengths");
  }
  if (t >= t_max) throw ContractError("partition_labels: epoch index must be below T_max");
  LabelPartition part;
  part.epoch = t;
  part.percentile_param = schedule(t, t_max);
  part.flip_threshold = part.percentile_param;
  part.set.assign(n, LabelSet::remaining);
  part.target.assign(labels.begin(), labels.end());
  part.weight.assign(n, 0.5);
  part.mu.assign(n, 0.0);
  if (n == 0) return part;
  part.loss_threshold = percentile({l_mul.begin(), l_mul.end()}, part.percentile_param);
  double mean = 0;
  for (double v : l_mul) mean += v;
  part.loss_mean = mean / static_cast<double>(n);
  const double cut = std::max(part.loss_threshold, part.loss_mean);
  for (std::size_t e = 0; e < n; ++e) {
    if (l_mul[e] < cut) {
      part.set[e] = LabelSet::clean;
      part.weight[e] = 1.0;
      continue;
    }
    const auto c_lf = argmax2(p_lf.row(e)), c_hf = argmax2(p_hf.row(e));
    if (c_lf != c_hf || static_cast<int>(c_lf) == labels[e]) continue;
    const double mu = std::sqrt(p_lf(e, c_lf) * p_hf(e, c_lf));
    if (mu > part.flip_threshold) {
      part.set[e] = LabelSet::flipped;
      part.target[e] = static_cast<int>(c_lf);
      part.weight[e] = mu;
      part.mu[e] = mu;
    }
  }
  return part;
}

/// Partition in which every label is clean with weight 1 (label division off).
inline LabelPartition all_clean(std::span<const int> labels, int t) {
  LabelPartition part;
  part.epoch = t;
  part.set.assign(labels.size(), LabelSet::clean);
  part.target.assign(labels.begin(), labels.end());
  part.weight.assign(labels.size(), 1.0);
  part.mu.assign(labels.size(), 0.0);
  return part;
}

// ---- supervision --------------------------------------------------------------

inline double supervision_loss(const Matrix& p_lf, const Matrix& p_hf, std::span<const int> target,
                               std::span<const double> weight, double eps = kClampEps) {
  const std::size_t n = target.size();
  if (p_lf.rows() != n || p_hf.rows() != n || weight.size() != n) {
    throw DimensionError("supervision_loss: inconsistent lengths");
  }
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t e = 0; e < n; ++e) {
    const auto c = static_cast<std::size_t>(target[e]);
    s += weight[e] * (std::log(std::max(p_lf(e, c), eps)) + std::log(std::max(p_hf(e, c), eps)));
  }
  return -s / static_cast<double>(n);
}

/// Tape version over head log-probabilities (n x 2).
inline Var supervision_loss(const Var& logp_lf, const Var& logp_hf,
                                std::span<const int> target, std::span<const double> weight,
                                double eps = kClampEps) {
  const std::size_t n = target.size();
  if (logp_lf.value().rows() != n || logp_hf.value().rows() != n || weight.size() != n) {
    throw DimensionError("supervision_loss: inconsistent lengths");
  }
  std::vector<std::uint32_t> cols(target.begin(), target.end());
  const double floor = std::log(eps);
  Var a = ad::clamp_min(ad::pick(logp_lf, cols), floor);
  Var b = ad::clamp_min(ad::pick(logp_hf, cols), floor);
  Var w = logp_lf.tape().constant(Matrix::column({weight.begin(), weight.end()}));
  return ad::scale(ad::sum(ad::mul(w, ad::add(a, b))), -1.0 / static_cast<double>(n));
}

inline double total_loss(double l_con, double l_sup, double lambda) { return l_con + lambda * l_sup; }

inline Var total_loss(const Var& l_con, const Var& l_sup, double lambda) {
  return ad::add(l_con, ad::scale(l_sup, lambda));
}

}  // namespace hilomix::obj
