// tests/gradcheck.hpp
//
// Central finite-difference oracle for gradient checks. Test-only code;
// independent of the tape's backward pass on purpose.

#ifndef AV2VEC_TESTS_GRADCHECK_HPP_
#define AV2VEC_TESTS_GRADCHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "av2vec/layers.hpp"

namespace av2vec_test {

using av2vec::ParamRegistry;
using av2vec::Tensor;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t checked = 0;
};

// Relative error with a floor: gradients that are essentially zero on both
// sides are compared absolutely (fd noise at h=1e-5 sits near 1e-11).
inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  if (denom < 1e-6) return std::abs(a - b) <= 1e-8 ? 0.0 : 1.0;
  return std::abs(a - b) / denom;
}

// `analytic[i]` is d loss / d *reg.entries[i].tensor at the current point;
// `forward` re-evaluates the full loss (targets and randomness held fixed).
inline GradCheckResult finite_diff_check(
    ParamRegistry<double>& reg, const std::vector<Tensor<double>>& analytic,
    const std::function<double()>& forward, double h = 1e-5) {
  GradCheckResult res;
  for (size_t i = 0; i < reg.size(); ++i) {
    Tensor<double>& p = *reg.entries[i].tensor;
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double orig = p[j];
      p[j] = orig + h;
      const double up = forward();
      p[j] = orig - h;
      const double down = forward();
      p[j] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double err = rel_err(analytic[i][j], fd);
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst_param = reg.entries[i].name + "[" + std::to_string(j) + "]";
      }
      ++res.checked;
    }
  }
  return res;
}

// Analytic gradients for every registry entry from a tape after backward();
// entries the loss never reached get zeros.
inline std::vector<Tensor<double>> collect_grads(
    av2vec::Tape<double>& tape, const ParamRegistry<double>& reg) {
  std::vector<Tensor<double>> grads;
  grads.reserve(reg.size());
  for (const auto& e : reg.entries) {
    const Tensor<double>* g = tape.grad_for(e.tensor);
    grads.push_back(g ? *g : Tensor<double>(e.tensor->shape));
  }
  return grads;
}

}  // namespace av2vec_test

#endif  // AV2VEC_TESTS_GRADCHECK_HPP_
