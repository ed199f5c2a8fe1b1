#pragma once

#include <functional>

#include "dscl/tensor.hpp"

namespace dscl {

// Central-difference gradient of a scalar function, the oracle every
// analytic backward pass is checked against. 64-bit only.
template <typename F>
Tensor<double> finite_diff_gradient(F&& f, const Tensor<double>& x,
                                    double h = 1e-5) {
  Tensor<double> g(x.shape());
  Tensor<double> p = x;
  for (size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(static_cast<const Tensor<double>&>(p));
    p[i] = orig - h;
    const double fm = f(static_cast<const Tensor<double>&>(p));
    p[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_gradient: non-finite objective value");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// max over coordinates of |a - g| / max(1, |g|)
inline double grad_rel_error(const Tensor<double>& analytic,
                             const Tensor<double>& numeric) {
  if (!analytic.same_shape(numeric))
    throw DimError("grad_rel_error: shape mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace dscl
