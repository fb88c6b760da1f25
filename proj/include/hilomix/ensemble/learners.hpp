#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hilomix/error.hpp"
#include "hilomix/numerics/adam.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/ops.hpp"
#include "hilomix/numerics/tape.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::ens {

namespace detail {

inline void check_xy(const Matrix& x, std::span<const int> y, const char* who) {
  if (x.rows() != y.size()) {
    throw DimensionError(std::string(who) + ": " + std::to_string(x.rows()) + " rows, " +
                         std::to_string(y.size()) + " labels");
  }
  for (int v : y)
    if (v != 0 && v != 1) throw ValidationError(std::string(who) + ": labels must be 0 or 1");
}

inline bool both_classes(std::span<const int> y) {
  bool zero = false, one = false;
  for (int v : y) (v ? one : zero) = true;
  return zero && one;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> to_vector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

}  // namespace detail

/// Column means and scales from a training matrix; constant columns map to 0.
struct Standardizer {
  std::vector<double> mean, scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean.assign(x.cols(), 0.0);
    s.scale.assign(x.cols(), 1.0);
    if (x.rows() == 0) return s;
    const double n = static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double m = 0;
      for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, j);
      m /= n;
      double v = 0;
      for (std::size_t i = 0; i < x.rows(); ++i) v += (x(i, j) - m) * (x(i, j) - m);
      const double sd = std::sqrt(v / n);
      s.mean[j] = m;
      s.scale[j] = sd > 1e-12 ? sd : 0.0;
    }
    return s;
  }

  [[nodiscard]] Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw DimensionError("Standardizer: width mismatch");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        out(i, j) = scale[j] > 0 ? (x(i, j) - mean[j]) / scale[j] : 0.0;
    return out;
  }

  [[nodiscard]] nlohmann::json to_json() const { return {{"mean", mean}, {"scale", scale}}; }
  static Standardizer from_json(const nlohmann::json& j) {
    return {detail::to_vector(j.at("mean")), detail::to_vector(j.at("scale"))};
  }
};

// ---- logistic regression ----------------------------------------------------

struct LogisticConfig {
  double l2 = 1e-4;
  double tolerance = 1e-6;
  int max_iterations = 500;
};

struct LogisticModel {
  Standardizer standardizer;
  std::vector<double> weights;
  double bias = 0.0;
  int iterations = 0;

  [[nodiscard]] std::vector<double> predict_proba(const Matrix& x) const {
    const Matrix z = standardizer.apply(x);
    std::vector<double> p(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      double s = bias;
      for (std::size_t j = 0; j < z.cols(); ++j) s += z(i, j) * weights[j];
      p[i] = detail::sigmoid(s);
    }
    return p;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"standardizer", standardizer.to_json()}, {"weights", weights}, {"bias", bias},
            {"iterations", iterations}};
  }
  static LogisticModel from_json(const nlohmann::json& j) {
    return {Standardizer::from_json(j.at("standardizer")), detail::to_vector(j.at("weights")),
            j.at("bias").get<double>(), j.at("iterations").get<int>()};
  }
};

/// Full-batch gradient descent on the mean log-loss plus (l2/2)|w|^2 over
/// standardized features. The step is 1/L for the loss's Lipschitz bound L.
inline LogisticModel fit_logistic(const Matrix& x, std::span<const int> y, const LogisticConfig& cfg = {}) {
  detail::check_xy(x, y, "fit_logistic");
  if (!detail::both_classes(y)) throw DegenerateInputError("fit_logistic: needs both classes");
  LogisticModel m;
  m.standardizer = Standardizer::fit(x);
  const Matrix z = m.standardizer.apply(x);
  const std::size_t n = z.rows(), d = z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Largest eigenvalue of [z 1]^T [z 1] / n by power iteration.
  std::vector<double> v(d + 1, 1.0), u(d + 1);
  double lambda = 1.0;
  for (int it = 0; it < 100; ++it) {
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = v[d];
      for (std::size_t j = 0; j < d; ++j) s += z(i, j) * v[j];
      for (std::size_t j = 0; j < d; ++j) u[j] += z(i, j) * s * inv_n;
      u[d] += s * inv_n;
    }
    double norm = 0;
    for (double q : u) norm += q * q;
    norm = std::sqrt(norm);
    if (norm == 0) break;
    lambda = norm;
    for (std::size_t j = 0; j <= d; ++j) v[j] = u[j] / norm;
  }
  const double step = 1.0 / (0.25 * lambda * 1.01 + cfg.l2);

  m.weights.assign(d, 0.0);
  std::vector<double> g(d);
  for (m.iterations = 0; m.iterations < cfg.max_iterations; ++m.iterations) {
    std::fill(g.begin(), g.end(), 0.0);
    double gb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = m.bias;
      for (std::size_t j = 0; j < d; ++j) s += z(i, j) * m.weights[j];
      const double r = (detail::sigmoid(s) - y[i]) * inv_n;
      for (std::size_t j = 0; j < d; ++j) g[j] += r * z(i, j);
      gb += r;
    }
    double norm = gb * gb;
    for (std::size_t j = 0; j < d; ++j) {
      g[j] += cfg.l2 * m.weights[j];
      norm += g[j] * g[j];
    }
    if (std::sqrt(norm) < cfg.tolerance) break;
    for (std::size_t j = 0; j < d; ++j) m.weights[j] -= step * g[j];
    m.bias -= step * gb;
  }
  if (!std::isfinite(m.bias)) throw NumericalError("fit_logistic: diverged");
  return m;
}

// ---- random forest ----------------------------------------------------------

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  std::size_t max_features = 0;  // 0: floor(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;  // leaf: fraction of class 1
};

struct Tree {
  std::vector<TreeNode> nodes;

  [[nodiscard]] double predict(std::span<const double> row) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(k)];
      k = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }
};

struct ForestModel {
  std::vector<Tree> trees;
  std::size_t width = 0;

  [[nodiscard]] std::vector<double> predict_proba(const Matrix& x) const {
    if (x.cols() != width) throw DimensionError("forest: feature width mismatch");
    std::vector<double> p(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (const auto& t : trees) p[i] += t.predict(x.row(i));
      p[i] /= static_cast<double>(trees.size());
    }
    return p;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : trees) {
      std::vector<int> f, l, r;
      std::vector<double> th, v;
      for (const auto& nd : t.nodes) {
        f.push_back(nd.feature);
        l.push_back(nd.left);
        r.push_back(nd.right);
        th.push_back(nd.threshold);
        v.push_back(nd.value);
      }
      ts.push_back({{"feature", f}, {"threshold", th}, {"left", l}, {"right", r}, {"value", v}});
    }
    return {{"width", width}, {"trees", ts}};
  }
  static ForestModel from_json(const nlohmann::json& j) {
    ForestModel m;
    m.width = j.at("width").get<std::size_t>();
    for (const auto& t : j.at("trees")) {
      const auto f = t.at("feature").get<std::vector<int>>();
      const auto l = t.at("left").get<std::vector<int>>();
      const auto r = t.at("right").get<std::vector<int>>();
      const auto th = detail::to_vector(t.at("threshold"));
      const auto v = detail::to_vector(t.at("value"));
      Tree tree;
      for (std::size_t k = 0; k < f.size(); ++k) tree.nodes.push_back({f[k], th[k], l[k], r[k], v[k]});
      m.trees.push_back(std::move(tree));
    }
    return m;
  }
};

namespace detail {

struct TreeBuilder {
  const Matrix& x;
  std::span<const int> y;
  std::size_t mtry;
  int max_depth;
  Rng& rng;
  Tree tree;
  std::vector<std::size_t> features;

  static double gini(double pos, double n) {
    if (n == 0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  int leaf(std::span<const std::size_t> idx) {
    double pos = 0;
    for (auto i : idx) pos += y[i];
    tree.nodes.push_back({-1, 0.0, -1, -1, pos / static_cast<double>(idx.size())});
    return static_cast<int>(tree.nodes.size() - 1);
  }

  int build(std::vector<std::size_t> idx, int depth) {
    double pos = 0;
    for (auto i : idx) pos += y[i];
    const auto n = static_cast<double>(idx.size());
    if (depth >= max_depth || idx.size() < 2 || pos == 0 || pos == n) return leaf(idx);

    // Partial Fisher-Yates picks mtry distinct candidate features.
    for (std::size_t k = 0; k < mtry; ++k)
      std::swap(features[k], features[k + uniform_index(rng, features.size() - k)]);

    int best_f = -1;
    double best_t = 0, best_score = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, int>> col(idx.size());
    for (std::size_t k = 0; k < mtry; ++k) {
      const std::size_t f = features[k];
      for (std::size_t r = 0; r < idx.size(); ++r) col[r] = {x(idx[r], f), y[idx[r]]};
      std::sort(col.begin(), col.end());
      double left_pos = 0;
      for (std::size_t r = 0; r + 1 < col.size(); ++r) {
        left_pos += col[r].second;
        if (col[r].first == col[r + 1].first) continue;
        const auto nl = static_cast<double>(r + 1), nr = n - nl;
        const double score = nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr);
        if (score < best_score) {
          best_score = score;
          best_f = static_cast<int>(f);
          best_t = col[r].first + 0.5 * (col[r + 1].first - col[r].first);
          if (!(best_t < col[r + 1].first)) best_t = col[r].first;  // midpoint rounded up
        }
      }
    }
    if (best_f < 0) return leaf(idx);

    std::vector<std::size_t> li, ri;
    for (auto i : idx) (x(i, static_cast<std::size_t>(best_f)) <= best_t ? li : ri).push_back(i);
    if (li.empty() || ri.empty()) return leaf(idx);
    const auto self = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({best_f, best_t, -1, -1, pos / n});
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(std::move(li), depth + 1);
    const int r = build(std::move(ri), depth + 1);
    tree.nodes[static_cast<std::size_t>(self)].left = l;
    tree.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
  }
};

}  // namespace detail

/// Gini CART trees on bootstrap samples; the prediction is the mean leaf
/// frequency of class 1.
inline ForestModel fit_forest(const Matrix& x, std::span<const int> y, const ForestConfig& cfg = {}) {
  detail::check_xy(x, y, "fit_forest");
  if (x.rows() < 2) throw ContractError("fit_forest: needs at least 2 rows");
  if (cfg.n_trees < 1 || cfg.max_depth < 0) throw ConfigError("fit_forest: bad tree configuration");
  const std::size_t d = x.cols();
  std::size_t mtry = cfg.max_features ? cfg.max_features
                                      : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
  mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(d, 1));
  ForestModel m;
  m.width = d;
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng = make_rng(cfg.seed, 0xf0 + static_cast<std::uint64_t>(t));
    std::vector<std::size_t> idx(x.rows());
    if (cfg.bootstrap) {
      for (auto& i : idx) i = uniform_index(rng, x.rows());
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    detail::TreeBuilder b{x, y, mtry, cfg.max_depth, rng, {}, std::vector<std::size_t>(d)};
    std::iota(b.features.begin(), b.features.end(), 0);
    if (d == 0) {
      b.leaf(idx);
    } else {
      b.build(std::move(idx), 0);
    }
    m.trees.push_back(std::move(b.tree));
  }
  return m;
}

// ---- multilayer perceptron --------------------------------------------------

struct MlpConfig {
  std::size_t hidden = 64;
  double learning_rate = 0.003;
  int epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct MlpModel {
  Standardizer standardizer;
  Parameter w1, b1, w2, b2;
  std::vector<double> loss_history;  // mean batch loss per epoch

  [[nodiscard]] std::vector<double> predict_proba(const Matrix& x) const {
    Matrix h = matmul(standardizer.apply(x), w1.value);
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) = std::tanh(h(i, j) + b1.value[j]);
    Matrix z = matmul(h, w2.value);
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < 2; ++j) z(i, j) += b2.value[j];
    const Matrix p = softmax_rows(z);
    std::vector<double> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) out[i] = p(i, 1);
    return out;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    auto mat = [](const Matrix& m) {
      return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
    };
    return {{"standardizer", standardizer.to_json()}, {"w1", mat(w1.value)}, {"b1", mat(b1.value)},
            {"w2", mat(w2.value)}, {"b2", mat(b2.value)}, {"loss_history", loss_history}};
  }
  static MlpModel from_json(const nlohmann::json& j) {
    auto mat = [](const nlohmann::json& m) {
      return Matrix(m.at("rows").get<std::size_t>(), m.at("cols").get<std::size_t>(),
                    detail::to_vector(m.at("data")));
    };
    MlpModel m;
    m.standardizer = Standardizer::from_json(j.at("standardizer"));
    m.w1 = Parameter("w1", mat(j.at("w1")));
    m.b1 = Parameter("b1", mat(j.at("b1")));
    m.w2 = Parameter("w2", mat(j.at("w2")));
    m.b2 = Parameter("b2", mat(j.at("b2")));
    m.loss_history = detail::to_vector(j.at("loss_history"));
    return m;
  }
};

/// One tanh hidden layer, softmax output initialised at zero, Adam on the
/// mean cross-entropy over shuffled minibatches.
inline MlpModel fit_mlp(const Matrix& x, std::span<const int> y, const MlpConfig& cfg = {}) {
  detail::check_xy(x, y, "fit_mlp");
  if (cfg.hidden < 1 || cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("fit_mlp: bad configuration");
  MlpModel m;
  m.standardizer = Standardizer::fit(x);
  const Matrix z = m.standardizer.apply(x);
  const std::size_t d = z.cols();
  Rng rng = make_rng(cfg.seed, 0x31f);
  Matrix w1(d, cfg.hidden);
  const double lim = std::sqrt(6.0 / static_cast<double>(d + cfg.hidden));
  std::uniform_real_distribution<double> u(-lim, lim);
  for (double& v : w1.values()) v = u(rng);
  m.w1 = Parameter("w1", std::move(w1));
  m.b1 = Parameter("b1", Matrix(1, cfg.hidden));
  m.w2 = Parameter("w2", Matrix(cfg.hidden, 2));
  m.b2 = Parameter("b2", Matrix(1, 2));
  Parameter* params[] = {&m.w1, &m.b1, &m.w2, &m.b2};
  AdamState adam(AdamConfig{cfg.learning_rate});

  std::vector<std::size_t> order(z.rows());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      Matrix xm(b1 - b0, d);
      std::vector<std::uint32_t> cls;
      for (std::size_t r = b0; r < b1; ++r) {
        std::copy_n(z.row(order[r]).begin(), d, xm.row(r - b0).begin());
        cls.push_back(static_cast<std::uint32_t>(y[order[r]]));
      }
      Tape t;
      Var xb = t.constant(std::move(xm));
      Var h = ad::tanh(ad::add_row(ad::matmul(xb, t.parameter(m.w1)), t.parameter(m.b1)));
      Var logits = ad::add_row(ad::matmul(h, t.parameter(m.w2)), t.parameter(m.b2));
      Var loss = ad::scale(ad::mean(ad::pick(ad::log_softmax_rows(logits), std::move(cls))), -1.0);
      const double lv = loss.value().scalar_value();
      if (!std::isfinite(lv)) throw NumericalError("fit_mlp: non-finite loss at epoch " + std::to_string(epoch));
      t.backward(loss);
      adam.step(params);
      total += lv;
      ++batches;
    }
    m.loss_history.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  }
  return m;
}

}  // namespace hilomix::ens
