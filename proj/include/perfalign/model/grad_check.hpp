#pragma once

#include <functional>
#include <string>
#include <vector>

#include "perfalign/model/training.hpp"

namespace perfalign {

class Rng;

struct GradCheckOptions {
  std::size_t samples = 64;  // parameter entries probed
  double step = 1e-5;
  /// Denominator floor so entries with vanishing gradient compare absolutely.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "tensor[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Evaluates the loss at the current parameter values. When `grads` is not
/// null it points at zeroed tensors shaped like the parameters, to be filled
/// with the analytic gradient.
using LossFn = std::function<double(std::vector<Matrix>* grads)>;

/// Compares the analytic gradient with central differences
/// (L(x+h) - L(x-h)) / 2h on randomly chosen entries. Parameters are restored.
/// Relative error: |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const ParamSet& params, const LossFn& loss, Rng& rng, const GradCheckOptions& opts = {});

}  // namespace perfalign
