#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ocgan/nn/autodiff.hpp"
#include "ocgan/nn/ops.hpp"
#include "ocgan/nn/rng.hpp"

namespace ocgan::nn {

/// Base for anything with trainable state. Subclasses describe their
/// parameters, buffers and submodules in register_state(); collection
/// re-derives pointers on every call, so modules stay movable.
class Module {
 public:
  virtual ~Module() = default;

  std::vector<Parameter*> parameters();
  /// Parameters plus persistent buffers (running stats, power-iteration
  /// vectors) with dotted names, for checkpointing.
  std::vector<std::pair<std::string, Tensor*>> named_state();
  std::vector<std::pair<std::string, Parameter*>> named_parameters();

  void set_train(bool on);
  bool training() const { return training_; }
  void zero_grad();
  long parameter_count();

 protected:
  virtual void register_state() = 0;
  void register_param(const std::string& name, Parameter& p);
  void register_buffer(const std::string& name, Tensor& t);
  void register_module(const std::string& name, Module& m);

 private:
  void rebuild();
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Parameter*>>& out);
  void collect_state(const std::string& prefix, std::vector<std::pair<std::string, Tensor*>>& out);

  std::vector<std::pair<std::string, Parameter*>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

enum class Init { kHeNormal, kGanNormal, kZero };

Tensor init_tensor(std::vector<int> shape, Init init, int fan_in, Rng& rng);

/// Fully connected layer, optionally spectrally normalized.
class Dense : public Module {
 public:
  Dense() = default;
  Dense(int in_dim, int out_dim, bool spectral_norm, Rng rng, Init init = Init::kGanNormal);
  Var forward(const Var& x);
  /// Effective (normalized) weight as a plain tensor, for inspection.
  Tensor effective_weight();
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  Parameter weight, bias;

 protected:
  void register_state() override;

 private:
  Var weight_var();
  int in_dim_ = 0, out_dim_ = 0;
  bool sn_ = false;
  Tensor u_;  // power-iteration state
};

/// 3x3/1x1/4x4 convolution, optionally spectrally normalized.
class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool spectral_norm, Rng rng,
         Init init = Init::kGanNormal);
  Var forward(const Var& x);
  Tensor effective_weight();
  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

  Parameter weight, bias;

 protected:
  void register_state() override;

 private:
  Var weight_var();
  int in_ch_ = 0, out_ch_ = 0, ksize_ = 0, stride_ = 1, pad_ = 0;
  bool sn_ = false;
  Tensor u_;
};

/// Affine-free batch normalization with running statistics.
class BatchNorm2d : public Module {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  Var forward(const Var& x);

  Tensor running_mean, running_var;
  Scalar momentum = 0.1;
  Scalar eps = 1e-5;

 protected:
  void register_state() override;

 private:
  int channels_ = 0;
};

class Embedding : public Module {
 public:
  Embedding() = default;
  Embedding(int count, int dim, Rng rng);
  Var forward(const std::vector<int>& idx);
  int dim() const { return dim_; }
  int count() const { return count_; }

  Parameter table;

 protected:
  void register_state() override;

 private:
  int count_ = 0, dim_ = 0;
};

/// sigma_max estimate of a (rows x cols) weight matrix by power iteration.
Scalar power_iteration_sigma(const Tensor& w_mat, int rows, int cols, int iters);

/// One in-place power-iteration step on (w as rows x cols); returns sigma.
Scalar spectral_sigma_step(const Tensor& w, int rows, int cols, Tensor& u, bool update_u);

}  // namespace ocgan::nn
