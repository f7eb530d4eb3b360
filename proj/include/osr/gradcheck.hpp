#pragma once

#include <cmath>
#include <cstdlib>
#include <vector>

#include "osr/error.hpp"
#include "osr/graph.hpp"

namespace osr {

struct GradCheckResult {
  double max_rel_err = 0.0;  // over checked entries
  int checked = 0;
  int excluded = 0;  // entries skipped as too close to a ReLU/max-pool kink
  double tol = 0.0;

  bool passed() const { return checked >= 0 && max_rel_err <= tol; }
};

// Central-difference check of d(output)/d(leaf).
//
// Runs forward + backward to capture the analytic gradient, then perturbs
// each selected leaf entry by +/-eps and compares. An entry is excluded
// (flagged, not compared) when any involved forward pass comes within
// 2*eps of a non-differentiable point. Relative error per entry is
// |analytic - numeric| / max(1, |analytic|). max_entries > 0 checks an
// evenly strided subset of the leaf.
template <class T>
GradCheckResult grad_check(Graph<T>& g, Value<T> output, Value<T> leaf, T eps, double tol,
                           int max_entries = 0) {
  if (eps <= T(0)) throw ConfigError("grad_check: eps must be positive");

  g.forward();
  const double base_kink = g.kink_distance();
  g.backward(output);
  const Tensor<T> analytic = g.grad(leaf);
  const Tensor<T> original = g.value(leaf);
  const double margin = 2.0 * static_cast<double>(eps);

  const std::int64_t n = original.size();
  std::vector<std::int64_t> entries;
  if (max_entries > 0 && n > max_entries) {
    entries.reserve(max_entries);
    for (int i = 0; i < max_entries; ++i) entries.push_back(i * n / max_entries);
  } else {
    entries.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) entries.push_back(i);
  }

  GradCheckResult res;
  res.tol = tol;
  Tensor<T> probe = original;
  for (std::int64_t e : entries) {
    const T x0 = original.data[e];

    probe.data[e] = x0 + eps;
    g.set_value(leaf, probe);
    g.forward();
    const double kp = g.kink_distance();
    const T fp = scalar_of(output);

    probe.data[e] = x0 - eps;
    g.set_value(leaf, probe);
    g.forward();
    const double km = g.kink_distance();
    const T fm = scalar_of(output);

    probe.data[e] = x0;

    if (std::min({base_kink, kp, km}) <= margin) {
      ++res.excluded;
      continue;
    }
    const double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) /
                           (2.0 * static_cast<double>(eps));
    if (!std::isfinite(numeric)) {
      throw NumericError("grad_check: non-finite finite-difference estimate at entry " +
                         std::to_string(e));
    }
    const double a = static_cast<double>(analytic.data[e]);
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    if (rel > res.max_rel_err) res.max_rel_err = rel;
    ++res.checked;
  }

  g.set_value(leaf, original);
  g.forward();
  return res;
}

}  // namespace osr
