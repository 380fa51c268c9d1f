#pragma once

// Brute-force references used against the closed-form estimators.

#include <algorithm>
#include <functional>
#include <vector>

#include "perfalign/metrics.hpp"

namespace oracle {

// Calls f on every k-subset of {0..n-1}.
inline void for_each_subset(int n, int k, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == k) {
      f(idx);
      return;
    }
    for (int i = start; i <= n - (k - depth); ++i) {
      idx[static_cast<std::size_t>(depth)] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
}

// Fraction of k-subsets holding at least one correct sample; samples 0..c-1 are correct.
inline double pass_at_k(int n, int c, int k) {
  double hit = 0, total = 0;
  for_each_subset(n, k, [&](const std::vector<int>& s) {
    total += 1;
    hit += std::any_of(s.begin(), s.end(), [c](int i) { return i < c; }) ? 1 : 0;
  });
  return hit / total;
}

// Mean over k-subsets of the best speedup; incorrect samples count 0.
inline double speedup_at_k(const std::vector<perfalign::SampleOutcome>& samples, double baseline, int k) {
  double sum = 0, total = 0;
  for_each_subset(static_cast<int>(samples.size()), k, [&](const std::vector<int>& s) {
    double best = 0;
    for (int i : s) {
      const auto& x = samples[static_cast<std::size_t>(i)];
      if (x.correct) best = std::max(best, baseline / x.runtime);
    }
    sum += best;
    total += 1;
  });
  return sum / total;
}

}  // namespace oracle
