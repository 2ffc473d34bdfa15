#pragma once

#include <string>
#include <vector>

#include "supe/tensor.hpp"

namespace supe {

// Adam with bias correction over a fixed list of parameter tensors.
template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<S>> params, std::vector<std::string> names,
       double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8, double grad_clip = 0.0)
      : params_(std::move(params)), names_(std::move(names)), lr_(lr),
        b1_(beta1), b2_(beta2), eps_(eps), grad_clip_(grad_clip) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), S(0));
      v_[i].assign(params_[i].size(), S(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) {
      auto& g = p.grad();
      std::fill(g.begin(), g.end(), S(0));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, (double)t_);
    double bc2 = 1.0 - std::pow(b2_, (double)t_);
    double clip_scale = 1.0;
    if (grad_clip_ > 0.0) {
      double sq = 0.0;
      for (auto& p : params_)
        for (S g : p.grad()) sq += (double)g * (double)g;
      double norm = std::sqrt(sq);
      if (norm > grad_clip_) clip_scale = grad_clip_ / norm;
    }
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& val = params_[i].val();
      auto& g = params_[i].grad();
      for (size_t j = 0; j < val.size(); ++j) {
        double gj = (double)g[j] * clip_scale;
        if (!std::isfinite(gj))
          throw error("numeric", "adam: non-finite gradient in parameter block '" +
                                     name(i) + "'");
        m_[i][j] = (S)(b1_ * m_[i][j] + (1.0 - b1_) * gj);
        v_[i][j] = (S)(b2_ * v_[i][j] + (1.0 - b2_) * gj * gj);
        double mhat = m_[i][j] / bc1;
        double vhat = v_[i][j] / bc2;
        val[j] -= (S)(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long steps() const { return t_; }
  const std::vector<Tensor<S>>& params() const { return params_; }

 private:
  std::string name(size_t i) const {
    return i < names_.size() ? names_[i] : ("param" + std::to_string(i));
  }

  std::vector<Tensor<S>> params_;
  std::vector<std::string> names_;
  std::vector<std::vector<S>> m_, v_;
  double lr_ = 3e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  double grad_clip_ = 0.0;  // off by default
  long t_ = 0;
};

}  // namespace supe
