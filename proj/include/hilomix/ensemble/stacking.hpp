#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hilomix/ensemble/learners.hpp"
#include "hilomix/error.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/io.hpp"
#include "hilomix/model/dual_gnn.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::ens {

enum class BaseKind : std::uint8_t { gnn_lf, gnn_hf, logistic, forest, mlp };

inline constexpr std::array<BaseKind, 5> kBaseKinds = {BaseKind::gnn_lf, BaseKind::gnn_hf, BaseKind::logistic,
                                                       BaseKind::forest, BaseKind::mlp};

inline const char* base_name(BaseKind k) {
  switch (k) {
    case BaseKind::gnn_lf: return "gnn_lf";
    case BaseKind::gnn_hf: return "gnn_hf";
    case BaseKind::logistic: return "logistic";
    case BaseKind::forest: return "forest";
    default: return "mlp";
  }
}

inline BaseKind base_kind(const std::string& name) {
  for (BaseKind k : kBaseKinds)
    if (name == base_name(k)) return k;
  throw ValidationError("unknown base model '" + name + "'");
}

struct StackConfig {
  int folds = 5;
  std::uint64_t seed = 7;
  LogisticConfig logistic;
  ForestConfig forest;
  MlpConfig mlp;

  void validate() const {
    if (folds < 2 || folds > 10) throw ConfigError("stack folds must lie in [2, 10]");
  }
};

/// Column layout of a pair feature row:
/// [h_i^LF | h_j^LF | h_i^HF | h_j^HF | |x_i - x_j|].
struct FeatureLayout {
  std::size_t embed = 0;
  std::size_t raw = 0;

  [[nodiscard]] std::size_t width() const noexcept { return 4 * embed + raw; }

  [[nodiscard]] std::pair<std::size_t, std::size_t> columns(BaseKind k) const noexcept {
    switch (k) {
      case BaseKind::gnn_lf: return {0, 2 * embed};
      case BaseKind::gnn_hf: return {2 * embed, 4 * embed};
      default: return {0, width()};
    }
  }
};

inline Matrix pair_features(const model::Embeddings& emb, const Matrix& x_std,
                            std::span<const graph::LabeledPair> pairs) {
  if (emb.lf.cols() != emb.hf.cols()) throw DimensionError("pair_features: branch widths differ");
  const std::size_t e = emb.lf.cols(), r = x_std.cols();
  const FeatureLayout layout{e, r};
  Matrix out(pairs.size(), layout.width());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = graph::canonical(pairs[k].a, pairs[k].b);
    if (j >= x_std.rows() || j >= emb.lf.rows()) throw IndexError("pair_features: account index out of range");
    auto row = out.row(k);
    std::copy_n(emb.lf.row(i).begin(), e, row.begin());
    std::copy_n(emb.lf.row(j).begin(), e, row.begin() + static_cast<std::ptrdiff_t>(e));
    std::copy_n(emb.hf.row(i).begin(), e, row.begin() + static_cast<std::ptrdiff_t>(2 * e));
    std::copy_n(emb.hf.row(j).begin(), e, row.begin() + static_cast<std::ptrdiff_t>(3 * e));
    for (std::size_t c = 0; c < r; ++c) row[4 * e + c] = std::abs(x_std(i, c) - x_std(j, c));
  }
  return out;
}

inline Matrix column_slice(const Matrix& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) throw DimensionError("column_slice: bad range");
  Matrix out(x.rows(), end - begin);
  for (std::size_t i = 0; i < x.rows(); ++i)
    std::copy(x.row(i).begin() + static_cast<std::ptrdiff_t>(begin),
              x.row(i).begin() + static_cast<std::ptrdiff_t>(end), out.row(i).begin());
  return out;
}

inline Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy(x.row(rows[k]).begin(), x.row(rows[k]).end(), out.row(k).begin());
  return out;
}

// ---- base models ------------------------------------------------------------

struct BaseModel {
  BaseKind kind = BaseKind::logistic;
  std::size_t col_begin = 0, col_end = 0;
  std::variant<LogisticModel, ForestModel, MlpModel> model;

  [[nodiscard]] std::vector<double> predict(const Matrix& features) const {
    const Matrix x = column_slice(features, col_begin, col_end);
    return std::visit([&](const auto& m) { return m.predict_proba(x); }, model);
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"kind", base_name(kind)},
            {"col_begin", col_begin},
            {"col_end", col_end},
            {"model", std::visit([](const auto& m) { return m.to_json(); }, model)}};
  }

  static BaseModel from_json(const nlohmann::json& j) {
    BaseModel b;
    b.kind = base_kind(j.at("kind").get<std::string>());
    b.col_begin = j.at("col_begin").get<std::size_t>();
    b.col_end = j.at("col_end").get<std::size_t>();
    const auto& m = j.at("model");
    switch (b.kind) {
      case BaseKind::forest: b.model = ForestModel::from_json(m); break;
      case BaseKind::mlp: b.model = MlpModel::from_json(m); break;
      default: b.model = LogisticModel::from_json(m); break;
    }
    return b;
  }
};

/// Seed of the fit of model m on fold f; the full-data fit uses f = folds.
inline std::uint64_t fit_seed(std::uint64_t seed, int fold, BaseKind m) {
  return seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(fold) * 16 + static_cast<std::uint64_t>(m) + 1;
}

inline BaseModel fit_base(BaseKind kind, const Matrix& features, std::span<const int> labels,
                          const FeatureLayout& layout, const StackConfig& cfg, std::uint64_t seed) {
  if (features.cols() != layout.width()) throw DimensionError("fit_base: feature width does not match layout");
  BaseModel b;
  b.kind = kind;
  std::tie(b.col_begin, b.col_end) = layout.columns(kind);
  const Matrix x = column_slice(features, b.col_begin, b.col_end);
  switch (kind) {
    case BaseKind::forest: {
      auto fc = cfg.forest;
      fc.seed = seed;
      b.model = fit_forest(x, labels, fc);
      break;
    }
    case BaseKind::mlp: {
      auto mc = cfg.mlp;
      mc.seed = seed;
      b.model = fit_mlp(x, labels, mc);
      break;
    }
    default: b.model = fit_logistic(x, labels, cfg.logistic); break;
  }
  return b;
}

// ---- out-of-fold matrix -----------------------------------------------------

struct OofMatrix {
  Matrix preds;            // rows x 5, column order kBaseKinds
  std::vector<int> fold;   // fold of each row
  int folds = 0;

  [[nodiscard]] std::vector<std::size_t> rows_in(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < fold.size(); ++k)
      if (fold[k] == f) out.push_back(k);
    return out;
  }
  [[nodiscard]] std::vector<std::size_t> rows_out(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < fold.size(); ++k)
      if (fold[k] != f) out.push_back(k);
    return out;
  }
};

/// Stratified fold labels: each class is shuffled and dealt round-robin.
inline std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_folds: K must be >= 2");
  if (labels.size() < static_cast<std::size_t>(k)) throw ContractError("stratified_folds: fewer rows than folds");
  Rng rng = make_rng(seed, 0xf01d);
  std::vector<int> fold(labels.size(), 0);
  int next = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (labels[r] == cls) idx.push_back(r);
    if (idx.size() == 1) throw DegenerateInputError("stratified_folds: class " + std::to_string(cls) + " has one row");
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t r : idx) {
      fold[r] = next;
      next = (next + 1) % k;
    }
  }
  return fold;
}

/// Predictions of a model-m fit that excludes fold f, on the rows of fold f.
inline std::vector<double> fold_predictions(const Matrix& features, std::span<const int> labels,
                                            const OofMatrix& oof, int f, BaseKind m, const FeatureLayout& layout,
                                            const StackConfig& cfg) {
  const auto out = oof.rows_out(f), in = oof.rows_in(f);
  std::vector<int> y;
  for (auto r : out) y.push_back(labels[r]);
  const auto model = fit_base(m, take_rows(features, out), y, layout, cfg, fit_seed(cfg.seed, f, m));
  return model.predict(take_rows(features, in));
}

inline OofMatrix build_oof(const Matrix& features, std::span<const int> labels, const FeatureLayout& layout,
                           const StackConfig& cfg) {
  cfg.validate();
  if (features.rows() != labels.size()) throw DimensionError("build_oof: rows and labels differ");
  OofMatrix oof;
  oof.folds = cfg.folds;
  oof.fold = stratified_folds(labels, cfg.folds, cfg.seed);
  oof.preds = Matrix(features.rows(), kBaseKinds.size());
  for (int f = 0; f < cfg.folds; ++f) {
    const auto in = oof.rows_in(f);
    for (std::size_t m = 0; m < kBaseKinds.size(); ++m) {
      const auto p = fold_predictions(features, labels, oof, f, kBaseKinds[m], layout, cfg);
      for (std::size_t k = 0; k < in.size(); ++k) oof.preds(in[k], m) = p[k];
    }
  }
  return oof;
}

struct SpotCheck {
  std::size_t row = 0;
  BaseKind model = BaseKind::logistic;
  double stored = 0.0, refit = 0.0;
  [[nodiscard]] bool identical() const noexcept { return stored == refit; }
};

/// Refits the fold-excluded model for `n_rows` sampled rows (cycling through
/// the base models) and compares against the stored OOF value.
inline std::vector<SpotCheck> spot_check_oof(const Matrix& features, std::span<const int> labels,
                                             const OofMatrix& oof, const FeatureLayout& layout,
                                             const StackConfig& cfg, std::size_t n_rows, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x5c0f);
  std::vector<SpotCheck> out;
  for (std::size_t s = 0; s < n_rows && oof.fold.size(); ++s) {
    const std::size_t row = uniform_index(rng, oof.fold.size());
    const BaseKind m = kBaseKinds[s % kBaseKinds.size()];
    const int f = oof.fold[row];
    const auto in = oof.rows_in(f);
    const auto p = fold_predictions(features, labels, oof, f, m, layout, cfg);
    const auto pos = static_cast<std::size_t>(std::find(in.begin(), in.end(), row) - in.begin());
    out.push_back({row, m, oof.preds(row, static_cast<std::size_t>(m)), p[pos]});
  }
  return out;
}

inline std::string oof_csv(const OofMatrix& oof, std::span<const graph::LabeledPair> pairs,
                           std::span<const int> labels) {
  std::string out = "row,a,b,fold,label";
  for (BaseKind k : kBaseKinds) out += std::string(",") + base_name(k);
  out += "\n";
  for (std::size_t r = 0; r < oof.fold.size(); ++r) {
    out += std::to_string(r) + "," + std::to_string(pairs[r].a) + "," + std::to_string(pairs[r].b) + "," +
           std::to_string(oof.fold[r]) + "," + std::to_string(labels[r]);
    for (std::size_t m = 0; m < kBaseKinds.size(); ++m) out += "," + io::format_double(oof.preds(r, m));
    out += "\n";
  }
  return out;
}

// ---- stacked ensemble -------------------------------------------------------

struct StackedEnsemble {
  FeatureLayout layout;
  std::vector<BaseModel> base;  // kBaseKinds order, fit on all rows
  LogisticModel meta;

  [[nodiscard]] Matrix base_predictions(const Matrix& features) const {
    if (features.cols() != layout.width()) throw DimensionError("ensemble: feature width does not match layout");
    Matrix out(features.rows(), base.size());
    for (std::size_t m = 0; m < base.size(); ++m) {
      const auto p = base[m].predict(features);
      for (std::size_t r = 0; r < p.size(); ++r) out(r, m) = p[r];
    }
    return out;
  }
};

inline LogisticModel fit_meta(const OofMatrix& oof, std::span<const int> labels, const LogisticConfig& cfg = {}) {
  if (oof.preds.cols() != kBaseKinds.size()) throw DimensionError("fit_meta: expected 5 OOF columns");
  return fit_logistic(oof.preds, labels, cfg);
}

inline std::vector<double> predict_stack(const StackedEnsemble& ens, const Matrix& features) {
  return ens.meta.predict_proba(ens.base_predictions(features));
}

struct StackResult {
  StackedEnsemble ensemble;
  OofMatrix oof;
};

inline StackResult fit_stack(const Matrix& features, std::span<const int> labels, const FeatureLayout& layout,
                             const StackConfig& cfg) {
  StackResult r;
  r.oof = build_oof(features, labels, layout, cfg);
  r.ensemble.layout = layout;
  for (BaseKind k : kBaseKinds)
    r.ensemble.base.push_back(fit_base(k, features, labels, layout, cfg, fit_seed(cfg.seed, cfg.folds, k)));
  r.ensemble.meta = fit_meta(r.oof, labels, cfg.logistic);
  return r;
}

// ---- bundle -----------------------------------------------------------------

inline void save_bundle(const std::filesystem::path& dir, const StackResult& r,
                        std::span<const graph::LabeledPair> pairs, std::span<const int> labels) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"embed", r.ensemble.layout.embed},
                             {"raw", r.ensemble.layout.raw},
                             {"folds", r.oof.folds},
                             {"rows", r.oof.fold.size()},
                             {"base_models", nlohmann::json::array()}};
  for (const auto& b : r.ensemble.base) {
    const std::string file = std::string(base_name(b.kind)) + ".cbor";
    const auto bytes = nlohmann::json::to_cbor(b.to_json());
    io::write_text(dir / file, std::string(bytes.begin(), bytes.end()));
    manifest["base_models"].push_back({{"name", base_name(b.kind)}, {"file", file}});
  }
  io::write_text(dir / "meta.json", r.ensemble.meta.to_json().dump(2) + "\n");
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  io::write_text(dir / "oof.csv", oof_csv(r.oof, pairs, labels));
}

inline StackedEnsemble load_bundle(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  StackedEnsemble e;
  e.layout = {manifest.at("embed").get<std::size_t>(), manifest.at("raw").get<std::size_t>()};
  for (const auto& b : manifest.at("base_models")) {
    const auto bytes = io::read_text(dir / b.at("file").get<std::string>());
    e.base.push_back(BaseModel::from_json(nlohmann::json::from_cbor(bytes)));
  }
  if (e.base.size() != kBaseKinds.size()) throw ValidationError("bundle: expected 5 base models");
  e.meta = LogisticModel::from_json(nlohmann::json::parse(io::read_text(dir / "meta.json")));
  return e;
}

}  // namespace hilomix::ens
