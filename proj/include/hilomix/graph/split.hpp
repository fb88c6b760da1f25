#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::graph {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified train/test split over label indices. Each class contributes
/// round(test_fraction * class size) items to the test side. Both outputs are
/// sorted.
inline Split stratified_split(const std::vector<int>& labels, double test_fraction,
                              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  Rng rng = make_rng(seed, 0x5b17);
  Split s;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == cls) idx.push_back(k);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace hilomix::graph
