#include "ocgan/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ocgan::nn {

void Module::register_param(const std::string& name, Parameter& p) {
  params_.emplace_back(name, &p);
}
void Module::register_buffer(const std::string& name, Tensor& t) {
  buffers_.emplace_back(name, &t);
}
void Module::register_module(const std::string& name, Module& m) {
  children_.emplace_back(name, &m);
}

void Module::rebuild() {
  params_.clear();
  buffers_.clear();
  children_.clear();
  register_state();
}

void Module::collect_params(const std::string& prefix,
                            std::vector<std::pair<std::string, Parameter*>>& out) {
  rebuild();
  for (auto& [n, p] : params_) out.emplace_back(prefix + n, p);
  for (auto& [n, c] : children_) c->collect_params(prefix + n + ".", out);
}

void Module::collect_state(const std::string& prefix,
                           std::vector<std::pair<std::string, Tensor*>>& out) {
  rebuild();
  for (auto& [n, p] : params_) out.emplace_back(prefix + n, &p->value);
  for (auto& [n, t] : buffers_) out.emplace_back(prefix + n, t);
  for (auto& [n, c] : children_) c->collect_state(prefix + n + ".", out);
}

std::vector<Parameter*> Module::parameters() {
  std::vector<std::pair<std::string, Parameter*>> named;
  collect_params("", named);
  std::vector<Parameter*> out;
  out.reserve(named.size());
  for (auto& [n, p] : named) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Parameter*>> Module::named_parameters() {
  std::vector<std::pair<std::string, Parameter*>> named;
  collect_params("", named);
  return named;
}

std::vector<std::pair<std::string, Tensor*>> Module::named_state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_state("", out);
  return out;
}

void Module::set_train(bool on) {
  rebuild();
  training_ = on;
  for (auto& [n, c] : children_) c->set_train(on);
}

void Module::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

long Module::parameter_count() {
  long n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

Tensor init_tensor(std::vector<int> shape, Init init, int fan_in, Rng& rng) {
  Tensor t(shape);
  switch (init) {
    case Init::kZero:
      break;
    case Init::kGanNormal:
      for (long i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 0.02);
      break;
    case Init::kHeNormal: {
      const Scalar std = std::sqrt(2.0 / std::max(1, fan_in));
      for (long i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
      break;
    }
  }
  return t;
}

Scalar spectral_sigma_step(const Tensor& w, int rows, int cols, Tensor& u, bool update_u) {
  auto wm = w.mat(rows, cols);
  auto uv = u.vec();
  Eigen::VectorXd v = wm.transpose() * uv;
  const Scalar vn = v.norm();
  if (vn > 1e-12) v /= vn;
  Eigen::VectorXd u_new = wm * v;
  const Scalar un = u_new.norm();
  if (un > 1e-12) u_new /= un;
  const Scalar sigma = u_new.dot(wm * v);
  if (update_u)
    for (int i = 0; i < rows; ++i) u[i] = u_new[i];
  return sigma > 1e-12 ? sigma : 1e-12;
}

Scalar power_iteration_sigma(const Tensor& w_mat, int rows, int cols, int iters) {
  Tensor u({rows});
  // fixed start vector; fine for sigma estimation on generic weights
  for (int i = 0; i < rows; ++i) u[i] = 1.0 / std::sqrt(static_cast<Scalar>(rows));
  Scalar sigma = 0;
  for (int it = 0; it < iters; ++it) sigma = spectral_sigma_step(w_mat, rows, cols, u, true);
  return sigma;
}

// broadcast a scalar Var to a full-shape Var; gradient sums back
static Var broadcast_scalar_impl(const Var& s, const std::vector<int>& shape) {
  Tensor out(shape);
  const Scalar v = s.value()[0];
  out.fill(v);
  return Var::make(std::move(out), {s.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar sum = 0;
    const Scalar* g = self.grad.data();
    for (long i = 0; i < self.grad.size(); ++i) sum += g[i];
    in.ensure_grad()[0] += sum;
  });
}

Dense::Dense(int in_dim, int out_dim, bool spectral_norm, Rng rng, Init init)
    : in_dim_(in_dim), out_dim_(out_dim), sn_(spectral_norm) {
  weight = Parameter("weight", init_tensor({out_dim, in_dim}, init, in_dim, rng));
  bias = Parameter("bias", Tensor::zeros({out_dim}));
  if (sn_) {
    u_ = Tensor({out_dim});
    for (int i = 0; i < out_dim; ++i) u_[i] = rng.normal();
    Scalar n = u_.vec().norm();
    for (int i = 0; i < out_dim; ++i) u_[i] /= n;
    // warm-started so the bound holds from the first step
    for (int i = 0; i < 20; ++i) spectral_sigma_step(weight.value, out_dim_, in_dim_, u_, true);
  }
}

void Dense::register_state() {
  if (!weight.value.defined()) return;
  register_param("weight", weight);
  register_param("bias", bias);
  if (sn_) register_buffer("sn_u", u_);
}

Var Dense::weight_var() {
  if (!sn_) return Var::leaf(weight);
  spectral_sigma_step(weight.value, out_dim_, in_dim_, u_, training());
  auto wm = weight.value.mat(out_dim_, in_dim_);
  Eigen::VectorXd v = wm.transpose() * u_.vec();
  const Scalar vn = v.norm();
  if (vn > 1e-12) v /= vn;
  Tensor vt({in_dim_, 1});
  for (int i = 0; i < in_dim_; ++i) vt[i] = v[i];
  Var w = Var::leaf(weight);
  Var sig = dot(Var(u_.clone()), reshape(matmul(w, Var(vt)), {out_dim_}));
  Var inv = exp_(neg(log_(sig)));
  return mul(w, broadcast_scalar_impl(inv, weight.value.shape()));
}

Var Dense::forward(const Var& x) { return linear(x, weight_var(), Var::leaf(bias)); }

Tensor Dense::effective_weight() {
  const bool prev = training();
  set_train(false);
  Tensor w = weight_var().value().clone();
  set_train(prev);
  return w;
}

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool spectral_norm, Rng rng,
               Init init)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), stride_(stride), pad_(pad),
      sn_(spectral_norm) {
  const int fan_in = in_ch * ksize * ksize;
  weight = Parameter("weight", init_tensor({out_ch, in_ch, ksize, ksize}, init, fan_in, rng));
  bias = Parameter("bias", Tensor::zeros({out_ch}));
  if (sn_) {
    u_ = Tensor({out_ch});
    for (int i = 0; i < out_ch; ++i) u_[i] = rng.normal();
    Scalar n = u_.vec().norm();
    for (int i = 0; i < out_ch; ++i) u_[i] /= n;
    for (int i = 0; i < 20; ++i) spectral_sigma_step(weight.value, out_ch_, fan_in, u_, true);
  }
}

void Conv2d::register_state() {
  if (!weight.value.defined()) return;
  register_param("weight", weight);
  register_param("bias", bias);
  if (sn_) register_buffer("sn_u", u_);
}

Var Conv2d::weight_var() {
  if (!sn_) return Var::leaf(weight);
  const int cols = in_ch_ * ksize_ * ksize_;
  spectral_sigma_step(weight.value, out_ch_, cols, u_, training());
  auto wm = weight.value.mat(out_ch_, cols);
  Eigen::VectorXd v = wm.transpose() * u_.vec();
  const Scalar vn = v.norm();
  if (vn > 1e-12) v /= vn;
  Tensor vt({cols, 1});
  for (int i = 0; i < cols; ++i) vt[i] = v[i];
  Var w = Var::leaf(weight);
  Var w2 = reshape(w, {out_ch_, cols});
  Var sig = dot(Var(u_.clone()), reshape(matmul(w2, Var(vt)), {out_ch_}));
  Var inv = exp_(neg(log_(sig)));
  return mul(w, broadcast_scalar_impl(inv, weight.value.shape()));
}

Var Conv2d::forward(const Var& x) {
  return conv2d(x, weight_var(), Var::leaf(bias), stride_, pad_);
}

Tensor Conv2d::effective_weight() {
  const bool prev = training();
  set_train(false);
  Tensor w = weight_var().value().clone();
  set_train(prev);
  return w;
}

BatchNorm2d::BatchNorm2d(int channels) : channels_(channels) {
  running_mean = Tensor::zeros({channels});
  running_var = Tensor::full({channels}, 1.0);
}

void BatchNorm2d::register_state() {
  if (!running_mean.defined()) return;
  register_buffer("running_mean", running_mean);
  register_buffer("running_var", running_var);
}

Var BatchNorm2d::forward(const Var& x) {
  if (x.shape()[1] != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  if (training()) return batch_norm_train(x, running_mean, running_var, momentum, eps);
  return batch_norm_eval(x, running_mean, running_var, eps);
}

Embedding::Embedding(int count, int dim, Rng rng) : count_(count), dim_(dim) {
  Tensor t({count, dim});
  for (long i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 1.0);
  table = Parameter("table", std::move(t));
}

void Embedding::register_state() {
  if (!table.value.defined()) return;
  register_param("table", table);
}

Var Embedding::forward(const std::vector<int>& idx) {
  return embedding_rows(Var::leaf(table), idx);
}

}  // namespace ocgan::nn
