#pragma once

#include <vector>

#include "ocgan/nn/autodiff.hpp"

namespace ocgan::nn {

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999,
       Scalar eps = 1e-8);

  void step();
  void zero_grad();
  Scalar lr() const { return lr_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  std::vector<Parameter*> params_;
  std::vector<Slot> slots_;
  Scalar lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace ocgan::nn
