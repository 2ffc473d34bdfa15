// Diagonal-Gaussian log densities, KL, and the tanh-squashed policy head.

#pragma once

#include "supe/tensor.hpp"

namespace supe {

constexpr double kLogTwoPi = 1.8378770664093453;
constexpr double kLogStdMin = -10.0;  // clamp range for all Gaussian heads
constexpr double kLogStdMax = 2.0;

template <class S>
Tensor<S> clamp_log_std(const Tensor<S>& log_std) {
  return clamp(log_std, S(kLogStdMin), S(kLogStdMax));
}

// sum_i [ -((x-mu)/sigma)^2/2 - log sigma - log(2 pi)/2 ], per batch row
template <class S>
Tensor<S> diag_gaussian_log_prob(const Tensor<S>& x, const Tensor<S>& mean,
                                 const Tensor<S>& log_std) {
  auto z = mul(sub(x, mean), exp_op(neg(log_std)));
  auto per_dim = sub(scale(mul(z, z), S(-0.5)),
                     add_scalar(log_std, S(0.5 * kLogTwoPi)));
  return sum_rows(per_dim);
}

// KL( N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2) ), diagonal, summed over dims
template <class S>
Tensor<S> kl_diag_gaussians(const Tensor<S>& mu_q, const Tensor<S>& log_std_q,
                            const Tensor<S>& mu_p, const Tensor<S>& log_std_p) {
  auto d = sub(mu_q, mu_p);
  auto var_q = exp_op(scale(log_std_q, S(2)));
  auto inv_var_p = exp_op(scale(log_std_p, S(-2)));
  auto per_dim = add_scalar(
      add(sub(log_std_p, log_std_q),
          scale(mul(add(var_q, mul(d, d)), inv_var_p), S(0.5))),
      S(-0.5));
  return sum_rows(per_dim);
}

// action = tanh(pre_tanh); log_prob corrected by the change of variables,
// using log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)) for stability.
template <class S>
std::pair<Tensor<S>, Tensor<S>> tanh_squash_log_prob(const Tensor<S>& pre_tanh,
                                                     const Tensor<S>& mean,
                                                     const Tensor<S>& log_std) {
  auto action = tanh_op(pre_tanh);
  auto log_jac = scale(
      sub(add_scalar(neg(pre_tanh), S(std::log(2.0))), softplus(scale(pre_tanh, S(-2)))),
      S(2));
  auto log_prob = sub(diag_gaussian_log_prob(pre_tanh, mean, log_std), sum_rows(log_jac));
  return {action, log_prob};
}

// Elementwise arctanh with the boundary clamp; value-only (returns a leaf).
template <class S>
Tensor<S> unsquash(const Tensor<S>& z_squashed) {
  std::vector<S> v(z_squashed.size());
  for (int64_t i = 0; i < z_squashed.size(); ++i) {
    S x = z_squashed.val()[i];
    if (!std::isfinite((double)x))
      throw error("numeric", "unsquash: non-finite input");
    const S lim = S(1) - S(1e-6);
    x = std::min(lim, std::max(-lim, x));
    v[i] = std::atanh(x);
  }
  return Tensor<S>::from(z_squashed.shape(), std::move(v));
}

template <class S>
std::vector<S> unsquash_values(const std::vector<S>& z) {
  std::vector<S> v(z.size());
  for (size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite((double)z[i]))
      throw error("numeric", "unsquash: non-finite input");
    const S lim = S(1) - S(1e-6);
    v[i] = std::atanh(std::min(lim, std::max(-lim, z[i])));
  }
  return v;
}

}  // namespace supe
