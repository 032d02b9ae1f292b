#include "catsnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace catsnn {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Graph g;
  g.set_grad_enabled(false);
  Var out = f(g, g.leaf(x));
  if (out.size() != 1) throw ContractError("grad_check: function output is not scalar");
  return out.value()[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& opts) {
  Tensor analytic;
  {
    Graph g;
    Var in = g.leaf(x, true);
    Var out = f(g, in);
    if (out.size() != 1)
      throw ContractError("grad_check: function output is not scalar, shape " + to_string(out.shape()));
    g.backward(out);
    analytic = g.grad_or_zeros(in);
  }

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.max_coords > 0 && opts.max_coords < coords.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  Tensor probe = x;
  for (auto i : coords) {
    const double orig = probe[i];
    probe[i] = orig + opts.eps;
    const double up = evaluate(f, probe);
    probe[i] = orig - opts.eps;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error || report.coords_checked == 0) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
    ++report.coords_checked;
  }
  report.passed = report.max_rel_error <= opts.rtol;
  return report;
}

}  // namespace catsnn
