#pragma once

#include <vector>

#include "ocgan/nn/autodiff.hpp"

namespace ocgan::nn {

// Elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, Scalar s);
Var mul_scalar(const Var& a, Scalar s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, Scalar slope);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var abs_(const Var& a);
/// min(0, x) — the hinge clamp.
Var min_zero(const Var& a);

// Linear algebra
Var matmul(const Var& a, const Var& b);     // (n,k) x (k,m)
Var matmul_nt(const Var& a, const Var& b);  // (n,k) x (m,k)^T -> (n,m)
Var linear(const Var& x, const Var& w, const Var& b);  // x(N,in) w(out,in) b(out)
Var transpose2d(const Var& a);
Var dot(const Var& a, const Var& b);  // flat inner product -> scalar

// Convolution & spatial (NCHW)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var avg_pool2d(const Var& x, int k);
Var upsample_nearest2(const Var& x);
Var spatial_mean(const Var& x);  // (N,C,H,W) -> (N,C)

// Shape
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& xs);  // along dim 1 of NCHW
Var concat_dim0(const std::vector<Var>& xs);
Var narrow0(const Var& a, int begin, int len);  // slice along dim 0
Var concat_cols(const std::vector<Var>& xs);    // matrices, along dim 1
Var narrow_cols(const Var& a, int begin, int len);
/// Rows of `values` (K,D) averaged into `out_rows` buckets by target
/// index; empty buckets stay zero.
Var scatter_mean_rows(const Var& values, const std::vector<int>& targets, int out_rows);

// Reductions & row ops
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_dim0(const Var& a);  // (n,m) -> (m)
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// x[i, idx[i]] for each row -> (n)
Var pick_rows(const Var& a, const std::vector<int>& idx);
/// log(sum_i exp(v_i)) of a flat tensor, max-stabilized -> scalar
Var logsumexp(const Var& v);
/// Row-wise cosine similarity of two (J,D) matrices -> (J). Zero-norm rows give 0.
Var cosine_rows(const Var& a, const Var& b);

// Normalization
Var batch_norm_train(const Var& x, Tensor& running_mean, Tensor& running_var, Scalar momentum,
                     Scalar eps);
Var batch_norm_eval(const Var& x, const Tensor& mean, const Tensor& var, Scalar eps);

// Lookup
Var embedding_rows(const Var& table, const std::vector<int>& idx);

// Plain-tensor helpers shared with non-autodiff code paths
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, Tensor& col);
Tensor bilinear_resize(const Tensor& src, int out_h, int out_w);  // (C,h,w) -> (C,oh,ow)

}  // namespace ocgan::nn
