#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/tape.hpp"

namespace hilomix {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares tape gradients with central differences.
///
/// `f` builds the loss on the supplied tape and returns the 1x1 loss node.
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|). When the
/// parameters hold more than `max_coords` scalars, a seeded sample is checked.
inline GradCheckResult grad_check(const std::function<Var(Tape&)>& f,
                                  std::span<Parameter* const> params, double eps = 1e-5,
                                  std::size_t max_coords = 400, std::uint64_t seed = 0) {
  if (eps < 1e-6 || eps > 1e-4) throw ContractError("grad_check: eps must lie in [1e-6, 1e-4]");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    analytic.push_back(p->gradient);
    p->zero_grad();
  }

  struct Coord {
    std::size_t param, index;
  };
  std::vector<Coord> coords;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t k = 0; k < params[i]->value.size(); ++k) coords.push_back({i, k});
  if (coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  auto eval = [&f]() {
    Tape tape;
    return f(tape).value().scalar_value();
  };

  GradCheckResult r;
  for (const auto& [pi, k] : coords) {
    double& x = params[pi]->value[k];
    const double saved = x;
    x = saved + eps;
    const double up = eval();
    x = saved - eps;
    const double down = eval();
    x = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[pi][k];
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    r.max_relative_error = std::max(r.max_relative_error, err);
    ++r.coordinates_checked;
  }
  return r;
}

}  // namespace hilomix
