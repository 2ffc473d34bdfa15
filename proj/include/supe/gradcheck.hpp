#pragma once

#include <vector>

#include "supe/tensor.hpp"

namespace supe {

// Compares the reverse-mode gradient of a scalar loss against central finite
// differences. `loss_fn` rebuilds the loss from the current parameter values;
// run it with S = double so the differencing itself is accurate.
template <class F>
double grad_check(F&& loss_fn, const std::vector<Tensor<double>>& params,
                  double h = 1e-4) {
  for (auto& p : params) {
    auto& g = const_cast<Tensor<double>&>(p).grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
  Tensor<double> loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(const_cast<Tensor<double>&>(p).grad());

  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& val = const_cast<Tensor<double>&>(params[i]).val();
    for (size_t j = 0; j < val.size(); ++j) {
      double keep = val[j];
      val[j] = keep + h;
      double fp = loss_fn().item();
      val[j] = keep - h;
      double fm = loss_fn().item();
      val[j] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double ad = analytic[i][j];
      double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace supe
