#include "ocgan/nn/optim.hpp"

#include <cmath>

namespace ocgan::nn {

Adam::Adam(std::vector<Parameter*> params, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params_.size());
  for (Parameter* p : params_)
    slots_.push_back({Tensor::zeros(p->value.shape()), Tensor::zeros(p->value.shape())});
}

void Adam::step() {
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    Slot& s = slots_[i];
    Scalar* w = p->value.data();
    const Scalar* g = p->grad.data();
    Scalar* m = s.m.data();
    Scalar* v = s.v.data();
    for (long j = 0; j < p->value.size(); ++j) {
      m[j] = beta1_ * m[j] + (1 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1 - beta2_) * g[j] * g[j];
      const Scalar mh = m[j] / bc1;
      const Scalar vh = v[j] / bc2;
      w[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace ocgan::nn
