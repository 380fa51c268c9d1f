#include "perfalign/model/grad_check.hpp"

#include <cmath>

#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

GradCheckReport grad_check(const ParamSet& params, const LossFn& loss, Rng& rng, const GradCheckOptions& opts) {
  std::vector<Matrix> analytic;
  std::size_t total = 0;
  for (const Matrix* p : params.tensors) {
    analytic.push_back(Matrix::Zero(p->rows(), p->cols()));
    total += static_cast<std::size_t>(p->size());
  }
  if (total == 0) throw ValidationError("grad_check needs at least one parameter");
  loss(&analytic);

  GradCheckReport report;
  const std::size_t probes = std::min(opts.samples, total);
  for (std::size_t s = 0; s < probes; ++s) {
    // Pick a flat index uniformly over all entries, then locate its tensor.
    std::size_t flat = probes == total ? s : rng.below(total);
    std::size_t ti = 0;
    while (flat >= static_cast<std::size_t>(params.tensors[ti]->size())) {
      flat -= static_cast<std::size_t>(params.tensors[ti]->size());
      ++ti;
    }
    double& x = params.tensors[ti]->data()[flat];
    const double saved = x;
    x = saved + opts.step;
    const double up = loss(nullptr);
    x = saved - opts.step;
    const double down = loss(nullptr);
    x = saved;

    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic[ti].data()[flat];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
    ++report.checked;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = params.names[ti] + "[" + std::to_string(flat) + "]";
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace perfalign
