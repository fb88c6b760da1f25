#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"
#include "hilomix/numerics/tape.hpp"

namespace hilomix {

struct AdamConfig {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name, so a
/// parameter set must use unique names.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::int64_t step_count() const noexcept { return t_; }

  /// Applies one update to every parameter and then zeroes the gradients.
  void step(std::span<Parameter* const> params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
      if (!p->gradient.same_shape(p->value)) {
        throw DimensionError("AdamState: gradient shape mismatch for " + p->name);
      }
      auto [it, inserted] = moments_.try_emplace(p->name);
      Moments& m = it->second;
      if (inserted) {
        m.first = Matrix(p->value.rows(), p->value.cols());
        m.second = Matrix(p->value.rows(), p->value.cols());
      } else if (!m.first.same_shape(p->value)) {
        throw DimensionError("AdamState: accumulator shape mismatch for " + p->name);
      }
      for (std::size_t k = 0; k < p->value.size(); ++k) {
        const double g = p->gradient[k];
        m.first[k] = cfg_.beta1 * m.first[k] + (1.0 - cfg_.beta1) * g;
        m.second[k] = cfg_.beta2 * m.second[k] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m.first[k] / bc1;
        const double vhat = m.second[k] / bc2;
        p->value[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
      p->zero_grad();
    }
  }

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->gradient.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (Parameter* p : params) p->gradient *= f;
  }
  return norm;
}

}  // namespace hilomix
