#pragma once

#include <cstdint>
#include <functional>

#include "catsnn/autograd.hpp"

namespace catsnn {

struct GradCheckOptions {
  double eps = 1e-5;
  double rtol = 1e-3;
  /// Absolute floor on the relative-error denominator so that coordinates
  /// whose true gradient is ~0 are judged by absolute error.
  double abs_floor = 1e-8;
  /// 0 checks every coordinate; otherwise a seeded random subset.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

/// Scalar function of one input, built fresh on the given graph.
using ScalarFn = std::function<Var(Graph&, const Var&)>;

/// Compares the tape gradient of f at x with central differences.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& opts = {});

}  // namespace catsnn
