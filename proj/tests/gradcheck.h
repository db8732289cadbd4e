#pragma once

// Central finite-difference gradient checking used across the test suites.
// The analytic gradient of a scalar objective is compared against
// (f(p+h) - f(p-h)) / 2h computed in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hvp/graph.h"
#include "hvp/nn.h"
#include "hvp/rng.h"

namespace hvp::test {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

// objective() must rebuild the computation from current param values and
// return its scalar value; analytic gradients are read from Param::grad
// after the caller runs one backward pass.
inline GradCheckResult finite_diff_check(
    const std::function<double()>& objective, const std::function<void()>& compute_grads,
    const ParamList& params, int slices_per_param, Rng& rng, double h = 1e-3) {
  compute_grads();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) {
    std::vector<double> g(static_cast<size_t>(p->grad.size()));
    for (int64_t i = 0; i < p->grad.size(); ++i) g[static_cast<size_t>(i)] = p->grad[i];
    analytic.push_back(std::move(g));
  }

  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    int n = static_cast<int>(p->value.size());
    for (int k = 0; k < slices_per_param; ++k) {
      int i = static_cast<int>(rng.uniform_int(n));
      double keep = p->value[i];
      p->value[i] = keep + h;
      double fp = objective();
      p->value[i] = keep - h;
      double fm = objective();
      p->value[i] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double an = analytic[pi][static_cast<size_t>(i)];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace hvp::test
