#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "oilca/num/tensor.hpp"

namespace oilca::num {

// Bias-corrected Adam over a fixed set of caller-owned parameter tensors.
class Adam {
 public:
  Adam(std::vector<Tensor2*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    if (params_.empty()) throw ContractError("Adam: no parameters");
    for (const Tensor2* p : params_) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }

  // grads[i] pairs with params[i]; applies one update in place.
  void step(const std::vector<Tensor2>& grads) {
    if (grads.size() != params_.size())
      throw DimensionError("Adam: gradient count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor2& p = *params_[k];
      const Tensor2& g = grads[k];
      if (!p.same_shape(g)) throw DimensionError("Adam: gradient shape");
      auto& m = m_[k].data();
      auto& v = v_[k].data();
      const auto& gd = g.data();
      auto& pd = p.data();
      for (std::size_t i = 0; i < pd.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gd[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gd[i] * gd[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        pd[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      p.require_finite("Adam-updated parameter");
    }
  }

  std::uint64_t steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  std::vector<Tensor2*> params_;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
  std::uint64_t t_ = 0;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
};

}  // namespace oilca::num
