#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hilomix/error.hpp"
#include "hilomix/freq/views.hpp"
#include "hilomix/graph/features.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/io.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/ops.hpp"
#include "hilomix/numerics/sparse.hpp"
#include "hilomix/numerics/tape.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::model {

struct BranchConfig {
  int layers = 2;
  double alpha = 0.5;

  void validate() const {
    if (layers < 1) throw ConfigError("branch depth L must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  }
};

struct ModelConfig {
  std::size_t input_dim = 32;
  std::size_t hidden = 64;
  std::size_t embed = 64;
  BranchConfig branch;
};

/// Shared encoder, smoothness scorer and the two link heads.
struct ModelParams {
  ModelConfig config;
  Parameter enc_w1, enc_b1, enc_w2, enc_b2;
  Parameter scorer_w, scorer_b;
  Parameter head_lf_w, head_lf_b, head_hf_w, head_hf_b;

  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.branch.validate();
    const std::size_t d = cfg.input_dim, m = cfg.hidden, h = cfg.embed;
    ModelParams p;
    p.config = cfg;
    p.enc_w1 = Parameter("enc_w1", Matrix(d, m));
    p.enc_b1 = Parameter("enc_b1", Matrix(1, m));
    p.enc_w2 = Parameter("enc_w2", Matrix(m, h));
    p.enc_b2 = Parameter("enc_b2", Matrix(1, h));
    p.scorer_w = Parameter("scorer_w", Matrix(2 * h, 1));
    p.scorer_b = Parameter("scorer_b", Matrix(1, 1));
    p.head_lf_w = Parameter("head_lf_w", Matrix(2 * h, 2));
    p.head_lf_b = Parameter("head_lf_b", Matrix(1, 2));
    p.head_hf_w = Parameter("head_hf_w", Matrix(2 * h, 2));
    p.head_hf_b = Parameter("head_hf_b", Matrix(1, 2));
    return p;
  }

  /// Glorot-uniform weights, zero biases.
  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    Rng rng = make_rng(seed, 0x1417);
    for (Parameter* w : {&p.enc_w1, &p.enc_w2, &p.scorer_w, &p.head_lf_w, &p.head_hf_w}) {
      const double lim = std::sqrt(6.0 / static_cast<double>(w->value.rows() + w->value.cols()));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (double& v : w->value.values()) v = u(rng);
    }
    return p;
  }

  std::vector<Parameter*> parameters() {
    return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &scorer_w, &scorer_b,
            &head_lf_w, &head_lf_b, &head_hf_w, &head_hf_b};
  }
  std::vector<const Parameter*> parameters() const {
    return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &scorer_w, &scorer_b,
            &head_lf_w, &head_lf_b, &head_hf_w, &head_hf_b};
  }
};

/// Everything about the graph the forward pass needs.
struct GraphContext {
  std::size_t n_accounts = 0;
  Matrix x;                  // node features, n x d
  std::vector<Edge> edges;   // undirected support of A
  SparseAdjacency pattern;   // unit weights over `edges`
};

/// A = transaction edges (optional) + the given positive association pairs.
inline GraphContext make_context(const graph::Hamig& g, std::span<const graph::LabeledPair> positives,
                                 bool use_transaction_edges = true) {
  GraphContext c;
  c.n_accounts = g.n_accounts();
  c.x = graph::node_feature_matrix(g);
  if (use_transaction_edges) {
    for (const auto& e : g.tx_edges) c.edges.push_back({e.account, g.contract_node(e.contract)});
  }
  for (const auto& p : positives)
    if (p.label == 1) c.edges.push_back({p.a, p.b});
  c.pattern = SparseAdjacency::from_undirected(g.n_nodes(), c.edges);
  return c;
}

// ---- value-level operators ------------------------------------------------

inline Matrix encode(const ModelParams& p, const Matrix& x) {
  Matrix hid = matmul(x, p.enc_w1.value);
  for (std::size_t i = 0; i < hid.rows(); ++i) {
    auto r = hid.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = std::tanh(r[j] + p.enc_b1.value[j]);
  }
  Matrix out = matmul(hid, p.enc_w2.value);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += p.enc_b2.value[j];
  }
  return out;
}

/// L applications of (I + A).
inline Matrix propagate_low(Matrix h, const SparseAdjacency& a, int layers) {
  for (int l = 0; l < layers; ++l) h += spmm(a, h);
  return h;
}

/// L applications of (I - alpha A).
inline Matrix propagate_high(Matrix h, const SparseAdjacency& a, int layers, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  for (int l = 0; l < layers; ++l) h -= spmm(a, h) * alpha;
  return h;
}

/// Softmax over the two head logits for the canonical pair (min, max).
inline std::array<double, 2> predict_link(const Matrix& w, const Matrix& b, const Matrix& h,
                                          std::uint32_t i, std::uint32_t j,
                                          std::size_t n_accounts) {
  if (i >= n_accounts || j >= n_accounts) {
    throw DomainError("predict_link: node " + std::to_string(std::max(i, j)) +
                      " is not an account");
  }
  if (i == j) throw ContractError("predict_link: i == j");
  const auto [a, c] = graph::canonical(i, j);
  const std::size_t k = h.cols();
  if (w.rows() != 2 * k || w.cols() != 2) throw DimensionError("predict_link: head shape");
  std::array<double, 2> z = {b[0], b[1]};
  for (int o = 0; o < 2; ++o) {
    double acc = 0.0;
    for (std::size_t q = 0; q < k; ++q) acc += h(a, q) * w(q, o);
    for (std::size_t q = 0; q < k; ++q) acc += h(c, q) * w(k + q, o);
    z[o] += acc;
  }
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// ---- tape forward -----------------------------------------------------------

struct Forward {
  Var h0;
  Var smoothness;  // |E| x 1
  Var lf;
  Var hf;
};

inline Var encode(Tape& t, ModelParams& p, const Matrix& x) {
  Var hid = ad::tanh(ad::add_row(ad::matmul(t.constant(x), t.parameter(p.enc_w1)),
                                     t.parameter(p.enc_b1)));
  return ad::add_row(ad::matmul(hid, t.parameter(p.enc_w2)), t.parameter(p.enc_b2));
}

inline Var propagate_low(const SparseAdjacency& pattern, const Var& w, Var h,
                             int layers) {
  for (int l = 0; l < layers; ++l) h = ad::add(h, ad::spmm(pattern, w, h));
  return h;
}

inline Var propagate_high(const SparseAdjacency& pattern, const Var& w, Var h,
                              int layers, double alpha) {
  for (int l = 0; l < layers; ++l) h = ad::sub(h, ad::scale(ad::spmm(pattern, w, h), alpha));
  return h;
}

/// Full-graph forward: encoder, smoothness, view split and both branches.
/// `ctx` must outlive the tape.
inline Forward forward(Tape& t, ModelParams& p, const GraphContext& ctx) {
  const auto& bc = p.config.branch;
  bc.validate();
  Forward f;
  f.h0 = encode(t, p, ctx.x);
  f.smoothness = freq::score_edges(f.h0, ctx.edges, t.parameter(p.scorer_w), t.parameter(p.scorer_b));
  const auto views = freq::normalized_view_weights(ctx.pattern, f.smoothness);
  f.lf = propagate_low(ctx.pattern, views.lf, f.h0, bc.layers);
  f.hf = propagate_high(ctx.pattern, views.hf, f.h0, bc.layers, bc.alpha);
  return f;
}

/// Canonical (i<j) index vectors for a pair list.
struct PairIndex {
  std::vector<std::uint32_t> first;
  std::vector<std::uint32_t> second;
};

template <class Pairs>
PairIndex pair_index(const Pairs& pairs, std::size_t n_accounts) {
  PairIndex idx;
  for (const auto& pr : pairs) {
    if (pr.a >= n_accounts || pr.b >= n_accounts) throw DomainError("pair endpoint is not an account");
    if (pr.a == pr.b) throw ContractError("pair with identical endpoints");
    const auto [a, b] = graph::canonical(pr.a, pr.b);
    idx.first.push_back(a);
    idx.second.push_back(b);
  }
  return idx;
}

/// Log-probabilities (n x 2) of a link head over the given pairs.
inline Var head_log_probs(const Var& h, const Var& w, const Var& b,
                              const PairIndex& idx) {
  Var z = ad::concat_cols(ad::gather_rows(h, idx.first), ad::gather_rows(h, idx.second));
  return ad::log_softmax_rows(ad::add_row(ad::matmul(z, w), b));
}

/// Plain-valued outputs of one forward pass.
struct Embeddings {
  Matrix h0;
  std::vector<double> smoothness;
  Matrix lf;
  Matrix hf;
};

inline Embeddings evaluate(ModelParams& p, const GraphContext& ctx) {
  Tape t;
  for (Parameter* q : p.parameters()) t.freeze(*q);
  Forward f = forward(t, p, ctx);
  const Matrix& s = f.smoothness.value();
  return {f.h0.value(), std::vector<double>(s.values().begin(), s.values().end()), f.lf.value(),
          f.hf.value()};
}

/// Head probabilities (n x 2) on plain values.
inline Matrix head_probs(const Matrix& h, const Parameter& w, const Parameter& b,
                         const PairIndex& idx) {
  const std::size_t k = h.cols();
  Matrix z(idx.first.size(), 2 * k);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    std::copy(h.row(idx.first[r]).begin(), h.row(idx.first[r]).end(), row.begin());
    std::copy(h.row(idx.second[r]).begin(), h.row(idx.second[r]).end(), row.begin() + static_cast<std::ptrdiff_t>(k));
  }
  Matrix logits = matmul(z, w.value);
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (std::size_t c = 0; c < 2; ++c) logits(r, c) += b.value[c];
  return softmax_rows(logits);
}

// ---- checkpoint -------------------------------------------------------------

inline void save_checkpoint(const std::filesystem::path& dir, const ModelParams& p) {
  std::filesystem::create_directories(dir);
  std::string bin;
  nlohmann::json tensors = nlohmann::json::array();
  for (const Parameter* q : p.parameters()) {
    tensors.push_back({{"name", q->name},
                       {"rows", q->value.rows()},
                       {"cols", q->value.cols()},
                       {"offset", bin.size() / 8}});
    io::append_f64_le(bin, q->value.values());
  }
  const auto& c = p.config;
  nlohmann::json manifest = {
      {"format", "hilomix-checkpoint-1"},
      {"dtype", "float64"},
      {"byte_order", "little"},
      {"config",
       {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"embed", c.embed},
        {"layers", c.branch.layers}, {"alpha", c.branch.alpha}}},
      {"tensors", tensors}};
  io::write_text(dir / "model.bin", bin);
  io::write_text(dir / "model.json", manifest.dump(2) + "\n");
}

inline ModelParams load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text(dir / "model.json"));
    ModelConfig c;
    const auto& jc = m.at("config");
    c.input_dim = jc.at("input_dim").get<std::size_t>();
    c.hidden = jc.at("hidden").get<std::size_t>();
    c.embed = jc.at("embed").get<std::size_t>();
    c.branch.layers = jc.at("layers").get<int>();
    c.branch.alpha = jc.at("alpha").get<double>();
    ModelParams p = ModelParams::zeros(c);
    const auto values = io::parse_f64_le(io::read_text(dir / "model.bin"));
    std::size_t matched = 0;
    for (Parameter* q : p.parameters()) {
      for (const auto& t : m.at("tensors")) {
        if (t.at("name").get<std::string>() != q->name) continue;
        const auto rows = t.at("rows").get<std::size_t>();
        const auto cols = t.at("cols").get<std::size_t>();
        const auto off = t.at("offset").get<std::size_t>();
        if (rows != q->value.rows() || cols != q->value.cols()) {
          throw ValidationError("checkpoint: tensor " + q->name + " has shape " +
                                std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                                q->value.shape_string());
        }
        if (off + rows * cols > values.size()) {
          throw ValidationError("checkpoint: tensor " + q->name + " exceeds model.bin");
        }
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), rows * cols,
                    q->value.values().begin());
        ++matched;
      }
    }
    if (matched != p.parameters().size()) throw ValidationError("checkpoint: missing tensors");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace hilomix::model
