#include "ocgan/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ocgan::nn {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
}

void axpy(Tensor& dst, const Tensor& src, Scalar alpha = 1.0) {
  Scalar* d = dst.data();
  const Scalar* s = src.data();
  for (long i = 0; i < dst.size(); ++i) d[i] += alpha * s[i];
}

// Elementwise unary op factory: f(value) and df(x, y) * dy.
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df) {
  Tensor out(a.shape());
  const Scalar* x = a.value().data();
  Scalar* y = out.data();
  for (long i = 0; i < out.size(); ++i) y[i] = f(x[i]);
  Tensor saved = out;  // shared buffer
  return Var::make(std::move(out), {a.node()}, [df, saved](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.ensure_grad();
    const Scalar* x = in.value.data();
    const Scalar* y = saved.data();
    const Scalar* dy = self.grad.data();
    Scalar* dx = g.data();
    for (long i = 0; i < g.size(); ++i) dx[i] += df(x[i], y[i]) * dy[i];
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value().clone();
  axpy(out, b.value());
  return Var::make(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) axpy(in->ensure_grad(), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value().clone();
  axpy(out, b.value(), -1.0);
  return Var::make(std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (self.inputs[0]->requires_grad) axpy(self.inputs[0]->ensure_grad(), self.grad);
    if (self.inputs[1]->requires_grad) axpy(self.inputs[1]->ensure_grad(), self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const Scalar* pa = a.value().data();
  const Scalar* pb = b.value().data();
  Scalar* po = out.data();
  for (long i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  return Var::make(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const Scalar* dy = self.grad.data();
    if (na.requires_grad) {
      Scalar* da = na.ensure_grad().data();
      const Scalar* vb = nb.value.data();
      for (long i = 0; i < self.grad.size(); ++i) da[i] += dy[i] * vb[i];
    }
    if (nb.requires_grad) {
      Scalar* db = nb.ensure_grad().data();
      const Scalar* va = na.value.data();
      for (long i = 0; i < self.grad.size(); ++i) db[i] += dy[i] * va[i];
    }
  });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, Scalar s) {
  return unary_op(
      a, [s](Scalar x) { return x + s; }, [](Scalar, Scalar) { return 1.0; });
}

Var mul_scalar(const Var& a, Scalar s) {
  return unary_op(
      a, [s](Scalar x) { return s * x; }, [s](Scalar, Scalar) { return s; });
}

Var relu(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return x > 0 ? x : 0.0; },
      [](Scalar x, Scalar) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, Scalar slope) {
  return unary_op(
      a, [slope](Scalar x) { return x > 0 ? x : slope * x; },
      [slope](Scalar x, Scalar) { return x > 0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](Scalar, Scalar y) { return y * (1.0 - y); });
}

Var tanh_(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return 1.0 - y * y; });
}

Var exp_(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Var log_(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return 1.0 / x; });
}

Var abs_(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return std::abs(x); },
      [](Scalar x, Scalar) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var min_zero(const Var& a) {
  return unary_op(
      a, [](Scalar x) { return x < 0 ? x : 0.0; },
      [](Scalar x, Scalar) { return x < 0 ? 1.0 : 0.0; });
}

Var matmul(const Var& a, const Var& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw std::invalid_argument("matmul: incompatible shapes " + a.value().shape_str() + " x " +
                                b.value().shape_str());
  int n = sa[0], k = sa[1], m = sb[1];
  Tensor out({n, m});
  out.mat(n, m).noalias() = a.value().mat(n, k) * b.value().mat(k, m);
  return Var::make(std::move(out), {a.node(), b.node()}, [n, k, m](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    auto dy = self.grad.mat(n, m);
    if (na.requires_grad)
      na.ensure_grad().mat(n, k).noalias() += dy * nb.value.mat(k, m).transpose();
    if (nb.requires_grad)
      nb.ensure_grad().mat(k, m).noalias() += na.value.mat(n, k).transpose() * dy;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1])
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  int n = sa[0], k = sa[1], m = sb[0];
  Tensor out({n, m});
  out.mat(n, m).noalias() = a.value().mat(n, k) * b.value().mat(m, k).transpose();
  return Var::make(std::move(out), {a.node(), b.node()}, [n, k, m](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    auto dy = self.grad.mat(n, m);
    if (na.requires_grad) na.ensure_grad().mat(n, k).noalias() += dy * nb.value.mat(m, k);
    if (nb.requires_grad)
      nb.ensure_grad().mat(m, k).noalias() += dy.transpose() * na.value.mat(n, k);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& sx = x.shape();
  const auto& sw = w.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1])
    throw std::invalid_argument("linear: shape mismatch x" + x.value().shape_str() + " w" +
                                w.value().shape_str());
  int n = sx[0], in = sx[1], out_dim = sw[0];
  Tensor out({n, out_dim});
  out.mat(n, out_dim).noalias() = x.value().mat(n, in) * w.value().mat(out_dim, in).transpose();
  if (b.defined()) {
    Scalar* po = out.data();
    const Scalar* pb = b.value().data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) po[static_cast<long>(i) * out_dim + j] += pb[j];
  }
  std::vector<NodePtr> inputs = {x.node(), w.node()};
  if (b.defined()) inputs.push_back(b.node());
  return Var::make(std::move(out), std::move(inputs), [n, in, out_dim](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    auto dy = self.grad.mat(n, out_dim);
    if (nx.requires_grad) nx.ensure_grad().mat(n, in).noalias() += dy * nw.value.mat(out_dim, in);
    if (nw.requires_grad)
      nw.ensure_grad().mat(out_dim, in).noalias() += dy.transpose() * nx.value.mat(n, in);
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Scalar* db = self.inputs[2]->ensure_grad().data();
      const Scalar* g = self.grad.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) db[j] += g[static_cast<long>(i) * out_dim + j];
    }
  });
}

Var transpose2d(const Var& a) {
  const auto& s = a.shape();
  if (s.size() != 2) throw std::invalid_argument("transpose2d: expects a matrix");
  int n = s[0], m = s[1];
  Tensor out({m, n});
  out.mat(m, n) = a.value().mat(n, m).transpose();
  return Var::make(std::move(out), {a.node()}, [n, m](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad().mat(n, m) += self.grad.mat(m, n).transpose();
  });
}

Var dot(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size()) throw std::invalid_argument("dot: size mismatch");
  Scalar v = a.value().vec().dot(b.value().vec());
  return Var::make(Tensor::scalar(v), {a.node(), b.node()}, [](Node& self) {
    Scalar g = self.grad[0];
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad) axpy(na.ensure_grad(), nb.value, g);
    if (nb.requires_grad) axpy(nb.ensure_grad(), na.value, g);
  });
}

// ---------------------------------------------------------------------------
// Convolution

void im2col(const Tensor& x, int kh, int kw, int stride, int pad, Tensor& col) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const long cols = static_cast<long>(N) * Ho * Wo;
  Scalar* pc = col.data();
  const Scalar* px = x.data();
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const long row = (static_cast<long>(c) * kh + ky) * kw + kx;
        Scalar* out_row = pc + row * cols;
        for (int n = 0; n < N; ++n) {
          const Scalar* xn = px + (static_cast<long>(n) * C + c) * H * W;
          Scalar* o = out_row + static_cast<long>(n) * Ho * Wo;
          for (int ho = 0; ho < Ho; ++ho) {
            const int iy = ho * stride - pad + ky;
            if (iy < 0 || iy >= H) {
              for (int wo = 0; wo < Wo; ++wo) o[static_cast<long>(ho) * Wo + wo] = 0.0;
              continue;
            }
            const Scalar* xr = xn + static_cast<long>(iy) * W;
            for (int wo = 0; wo < Wo; ++wo) {
              const int ix = wo * stride - pad + kx;
              o[static_cast<long>(ho) * Wo + wo] = (ix >= 0 && ix < W) ? xr[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

namespace {

void col2im_add(const Tensor& col, int N, int C, int H, int W, int kh, int kw, int stride, int pad,
                Tensor& dx) {
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const long cols = static_cast<long>(N) * Ho * Wo;
  const Scalar* pc = col.data();
  Scalar* px = dx.data();
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const long row = (static_cast<long>(c) * kh + ky) * kw + kx;
        const Scalar* in_row = pc + row * cols;
        for (int n = 0; n < N; ++n) {
          Scalar* xn = px + (static_cast<long>(n) * C + c) * H * W;
          const Scalar* i = in_row + static_cast<long>(n) * Ho * Wo;
          for (int ho = 0; ho < Ho; ++ho) {
            const int iy = ho * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            Scalar* xr = xn + static_cast<long>(iy) * W;
            for (int wo = 0; wo < Wo; ++wo) {
              const int ix = wo * stride - pad + kx;
              if (ix >= 0 && ix < W) xr[ix] += i[static_cast<long>(ho) * Wo + wo];
            }
          }
        }
      }
    }
  }
}

// (N,Cout,Ho,Wo) <-> (Cout, N*Ho*Wo) layout shuffles used around the GEMM.
void gemm_to_nchw(const Tensor& g, int N, int Cout, int Ho, int Wo, Tensor& y) {
  const long hw = static_cast<long>(Ho) * Wo;
  const Scalar* pg = g.data();
  Scalar* py = y.data();
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      const Scalar* src = pg + co * (N * hw) + n * hw;
      Scalar* dst = py + (static_cast<long>(n) * Cout + co) * hw;
      std::copy(src, src + hw, dst);
    }
}

void nchw_to_gemm(const Tensor& y, int N, int Cout, int Ho, int Wo, Tensor& g) {
  const long hw = static_cast<long>(Ho) * Wo;
  const Scalar* py = y.data();
  Scalar* pg = g.data();
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      const Scalar* src = py + (static_cast<long>(n) * Cout + co) * hw;
      std::copy(src, src + hw, pg + co * (N * hw) + n * hw);
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const auto& sx = x.shape();
  const auto& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4)
    throw std::invalid_argument("conv2d: expects 4-d input and weight");
  if (sx[1] != sw[1])
    throw std::invalid_argument("conv2d: channel mismatch x" + x.value().shape_str() + " w" +
                                w.value().shape_str());
  const int N = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
  const int Cout = sw[0], kh = sw[2], kw = sw[3];
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output would be empty");
  const int K = Cin * kh * kw;
  const long cols = static_cast<long>(N) * Ho * Wo;

  Tensor col({K, static_cast<int>(cols)});
  im2col(x.value(), kh, kw, stride, pad, col);
  Tensor g({Cout, static_cast<int>(cols)});
  g.mat(Cout, cols).noalias() = w.value().mat(Cout, K) * col.mat(K, cols);
  if (b.defined()) {
    Scalar* pg = g.data();
    const Scalar* pb = b.value().data();
    for (int co = 0; co < Cout; ++co) {
      Scalar* row = pg + co * cols;
      for (long i = 0; i < cols; ++i) row[i] += pb[co];
    }
  }
  Tensor out({N, Cout, Ho, Wo});
  gemm_to_nchw(g, N, Cout, Ho, Wo, out);

  std::vector<NodePtr> inputs = {x.node(), w.node()};
  if (b.defined()) inputs.push_back(b.node());
  // col is recomputed in the backward pass to keep graph memory flat.
  return Var::make(std::move(out), std::move(inputs),
                   [N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, cols](Node& self) {
                     Node& nx = *self.inputs[0];
                     Node& nw = *self.inputs[1];
                     Tensor dy_mat({Cout, static_cast<int>(cols)});
                     nchw_to_gemm(self.grad, N, Cout, Ho, Wo, dy_mat);
                     if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                       Scalar* db = self.inputs[2]->ensure_grad().data();
                       const Scalar* pg = dy_mat.data();
                       for (int co = 0; co < Cout; ++co) {
                         Scalar s = 0;
                         const Scalar* row = pg + co * cols;
                         for (long i = 0; i < cols; ++i) s += row[i];
                         db[co] += s;
                       }
                     }
                     if (nw.requires_grad) {
                       Tensor col({K, static_cast<int>(cols)});
                       im2col(nx.value, kh, kw, stride, pad, col);
                       nw.ensure_grad().mat(Cout, K).noalias() +=
                           dy_mat.mat(Cout, cols) * col.mat(K, cols).transpose();
                     }
                     if (nx.requires_grad) {
                       Tensor dcol({K, static_cast<int>(cols)});
                       dcol.mat(K, cols).noalias() =
                           nw.value.mat(Cout, K).transpose() * dy_mat.mat(Cout, cols);
                       col2im_add(dcol, N, Cin, H, W, kh, kw, stride, pad, nx.ensure_grad());
                     }
                   });
}

Var avg_pool2d(const Var& x, int k) {
  const auto& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("avg_pool2d: expects NCHW");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  if (H % k != 0 || W % k != 0) throw std::invalid_argument("avg_pool2d: size not divisible");
  const int Ho = H / k, Wo = W / k;
  Tensor out({N, C, Ho, Wo});
  const Scalar* px = x.value().data();
  Scalar* po = out.data();
  const Scalar inv = 1.0 / (k * k);
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    const Scalar* plane = px + nc * H * W;
    Scalar* oplane = po + nc * Ho * Wo;
    for (int ho = 0; ho < Ho; ++ho)
      for (int wo = 0; wo < Wo; ++wo) {
        Scalar sum = 0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) sum += plane[(ho * k + dy) * W + wo * k + dx];
        oplane[ho * Wo + wo] = sum * inv;
      }
  }
  return Var::make(std::move(out), {x.node()}, [N, C, H, W, k, Ho, Wo](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    const Scalar inv = 1.0 / (k * k);
    for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
      Scalar* plane = dx + nc * H * W;
      const Scalar* gplane = dy + nc * Ho * Wo;
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          const Scalar g = gplane[ho * Wo + wo] * inv;
          for (int ddy = 0; ddy < k; ++ddy)
            for (int ddx = 0; ddx < k; ++ddx) plane[(ho * k + ddy) * W + wo * k + ddx] += g;
        }
    }
  });
}

Var upsample_nearest2(const Var& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("upsample_nearest2: expects NCHW");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  Tensor out({N, C, 2 * H, 2 * W});
  const Scalar* px = x.value().data();
  Scalar* po = out.data();
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    const Scalar* plane = px + nc * H * W;
    Scalar* oplane = po + nc * 4 * H * W;
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        const Scalar v = plane[y * W + xx];
        Scalar* o = oplane + (2 * y) * (2 * W) + 2 * xx;
        o[0] = v;
        o[1] = v;
        o[2 * W] = v;
        o[2 * W + 1] = v;
      }
  }
  return Var::make(std::move(out), {x.node()}, [N, C, H, W](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
      Scalar* plane = dx + nc * H * W;
      const Scalar* gplane = dy + nc * 4 * H * W;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const Scalar* g = gplane + (2 * y) * (2 * W) + 2 * xx;
          plane[y * W + xx] += g[0] + g[1] + g[2 * W] + g[2 * W + 1];
        }
    }
  });
}

Var spatial_mean(const Var& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("spatial_mean: expects NCHW");
  const int N = s[0], C = s[1];
  const long hw = static_cast<long>(s[2]) * s[3];
  Tensor out({N, C});
  const Scalar* px = x.value().data();
  Scalar* po = out.data();
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    Scalar sum = 0;
    const Scalar* plane = px + nc * hw;
    for (long i = 0; i < hw; ++i) sum += plane[i];
    po[nc] = sum / static_cast<Scalar>(hw);
  }
  return Var::make(std::move(out), {x.node()}, [N, C, hw](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
      const Scalar g = dy[nc] / static_cast<Scalar>(hw);
      Scalar* plane = dx + nc * hw;
      for (long i = 0; i < hw; ++i) plane[i] += g;
    }
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a.value().reshaped(shape);  // shares buffer
  std::vector<int> in_shape = a.shape();
  return Var::make(std::move(out), {a.node()}, [in_shape](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    axpy(in.ensure_grad(), self.grad.reshaped(in_shape));
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty");
  const int N = xs[0].shape()[0], H = xs[0].shape()[2], W = xs[0].shape()[3];
  int Ctot = 0;
  for (const auto& v : xs) {
    const auto& s = v.shape();
    if (s.size() != 4 || s[0] != N || s[2] != H || s[3] != W)
      throw std::invalid_argument("concat_channels: shape mismatch");
    Ctot += s[1];
  }
  Tensor out({N, Ctot, H, W});
  const long hw = static_cast<long>(H) * W;
  Scalar* po = out.data();
  std::vector<int> chans;
  long coff = 0;
  for (const auto& v : xs) {
    const int C = v.shape()[1];
    chans.push_back(C);
    const Scalar* px = v.value().data();
    for (int n = 0; n < N; ++n)
      std::copy(px + static_cast<long>(n) * C * hw, px + static_cast<long>(n + 1) * C * hw,
                po + (static_cast<long>(n) * Ctot + coff) * hw);
    coff += C;
  }
  std::vector<NodePtr> inputs;
  for (const auto& v : xs) inputs.push_back(v.node());
  return Var::make(std::move(out), std::move(inputs), [N, Ctot, hw, chans](Node& self) {
    const Scalar* dy = self.grad.data();
    long coff = 0;
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      const int C = chans[i];
      Node& in = *self.inputs[i];
      if (in.requires_grad) {
        Scalar* dx = in.ensure_grad().data();
        for (int n = 0; n < N; ++n) {
          const Scalar* src = dy + (static_cast<long>(n) * Ctot + coff) * hw;
          Scalar* dst = dx + static_cast<long>(n) * C * hw;
          for (long j = 0; j < C * hw; ++j) dst[j] += src[j];
        }
      }
      coff += C;
    }
  });
}

Var concat_dim0(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_dim0: empty");
  std::vector<int> rest(xs[0].shape().begin() + 1, xs[0].shape().end());
  long stride = numel(rest);
  int n0 = 0;
  for (const auto& v : xs) {
    std::vector<int> r(v.shape().begin() + 1, v.shape().end());
    if (r != rest) throw std::invalid_argument("concat_dim0: trailing shape mismatch");
    n0 += v.shape()[0];
  }
  std::vector<int> out_shape = {n0};
  out_shape.insert(out_shape.end(), rest.begin(), rest.end());
  Tensor out(out_shape);
  Scalar* po = out.data();
  long off = 0;
  std::vector<long> sizes;
  for (const auto& v : xs) {
    const long sz = v.value().size();
    sizes.push_back(sz);
    std::copy(v.value().data(), v.value().data() + sz, po + off);
    off += sz;
  }
  std::vector<NodePtr> inputs;
  for (const auto& v : xs) inputs.push_back(v.node());
  (void)stride;
  return Var::make(std::move(out), std::move(inputs), [sizes](Node& self) {
    const Scalar* dy = self.grad.data();
    long off = 0;
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      Node& in = *self.inputs[i];
      if (in.requires_grad) {
        Scalar* dx = in.ensure_grad().data();
        for (long j = 0; j < sizes[i]; ++j) dx[j] += dy[off + j];
      }
      off += sizes[i];
    }
  });
}

Var narrow0(const Var& a, int begin, int len) {
  const auto& s = a.shape();
  if (s.empty() || begin < 0 || begin + len > s[0])
    throw std::invalid_argument("narrow0: bad range");
  std::vector<int> rest(s.begin() + 1, s.end());
  const long stride = numel(rest);
  std::vector<int> out_shape = {len};
  out_shape.insert(out_shape.end(), rest.begin(), rest.end());
  Tensor out(out_shape);
  std::copy(a.value().data() + begin * stride, a.value().data() + (begin + len) * stride,
            out.data());
  return Var::make(std::move(out), {a.node()}, [begin, len, stride](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data() + begin * stride;
    const Scalar* dy = self.grad.data();
    for (long j = 0; j < len * stride; ++j) dx[j] += dy[j];
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
  const int n = xs[0].shape()[0];
  int mtot = 0;
  for (const auto& v : xs) {
    const auto& s = v.shape();
    if (s.size() != 2 || s[0] != n) throw std::invalid_argument("concat_cols: shape mismatch");
    mtot += s[1];
  }
  Tensor out({n, mtot});
  Scalar* po = out.data();
  std::vector<int> widths;
  int coff = 0;
  for (const auto& v : xs) {
    const int m = v.shape()[1];
    widths.push_back(m);
    const Scalar* px = v.value().data();
    for (int i = 0; i < n; ++i)
      std::copy(px + static_cast<long>(i) * m, px + static_cast<long>(i + 1) * m,
                po + static_cast<long>(i) * mtot + coff);
    coff += m;
  }
  std::vector<NodePtr> inputs;
  for (const auto& v : xs) inputs.push_back(v.node());
  return Var::make(std::move(out), std::move(inputs), [n, mtot, widths](Node& self) {
    const Scalar* dy = self.grad.data();
    int coff = 0;
    for (size_t k = 0; k < self.inputs.size(); ++k) {
      const int m = widths[k];
      Node& in = *self.inputs[k];
      if (in.requires_grad) {
        Scalar* dx = in.ensure_grad().data();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j)
            dx[static_cast<long>(i) * m + j] += dy[static_cast<long>(i) * mtot + coff + j];
      }
      coff += m;
    }
  });
}

Var narrow_cols(const Var& a, int begin, int len) {
  const auto& s = a.shape();
  if (s.size() != 2 || begin < 0 || begin + len > s[1])
    throw std::invalid_argument("narrow_cols: bad range");
  const int n = s[0], m = s[1];
  Tensor out({n, len});
  const Scalar* p = a.value().data();
  Scalar* po = out.data();
  for (int i = 0; i < n; ++i)
    std::copy(p + static_cast<long>(i) * m + begin, p + static_cast<long>(i) * m + begin + len,
              po + static_cast<long>(i) * len);
  return Var::make(std::move(out), {a.node()}, [n, m, begin, len](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < len; ++j)
        dx[static_cast<long>(i) * m + begin + j] += dy[static_cast<long>(i) * len + j];
  });
}

Var scatter_mean_rows(const Var& values, const std::vector<int>& targets, int out_rows) {
  const auto& s = values.shape();
  if (s.size() != 2 || static_cast<int>(targets.size()) != s[0])
    throw std::invalid_argument("scatter_mean_rows: bad targets");
  const int k = s[0], d = s[1];
  std::vector<int> counts(out_rows, 0);
  for (int t : targets) {
    if (t < 0 || t >= out_rows) throw std::out_of_range("scatter_mean_rows: target out of range");
    counts[t]++;
  }
  Tensor out({out_rows, d});
  const Scalar* pv = values.value().data();
  Scalar* po = out.data();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j)
      po[static_cast<long>(targets[i]) * d + j] += pv[static_cast<long>(i) * d + j];
  for (int r = 0; r < out_rows; ++r)
    if (counts[r] > 1)
      for (int j = 0; j < d; ++j) po[static_cast<long>(r) * d + j] /= counts[r];
  return Var::make(std::move(out), {values.node()}, [targets, counts, d](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dv = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (size_t i = 0; i < targets.size(); ++i) {
      const int t = targets[i];
      const Scalar inv = 1.0 / counts[t];
      for (int j = 0; j < d; ++j)
        dv[i * d + j] += dy[static_cast<long>(t) * d + j] * inv;
    }
  });
}

Var sum_all(const Var& a) {
  Scalar s = 0;
  const Scalar* p = a.value().data();
  for (long i = 0; i < a.value().size(); ++i) s += p[i];
  return Var::make(Tensor::scalar(s), {a.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Scalar g = self.grad[0];
    Scalar* dx = in.ensure_grad().data();
    for (long i = 0; i < in.value.size(); ++i) dx[i] += g;
  });
}

Var mean_all(const Var& a) { return mul_scalar(sum_all(a), 1.0 / a.value().size()); }

Var mean_dim0(const Var& a) {
  const auto& s = a.shape();
  if (s.size() != 2) throw std::invalid_argument("mean_dim0: expects a matrix");
  const int n = s[0], m = s[1];
  Tensor out({m});
  const Scalar* p = a.value().data();
  Scalar* po = out.data();
  for (int j = 0; j < m; ++j) po[j] = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) po[j] += p[static_cast<long>(i) * m + j];
  for (int j = 0; j < m; ++j) po[j] /= n;
  return Var::make(std::move(out), {a.node()}, [n, m](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) dx[static_cast<long>(i) * m + j] += dy[j] / n;
  });
}

Var softmax_rows(const Var& a) {
  const auto& s = a.shape();
  if (s.size() != 2) throw std::invalid_argument("softmax_rows: expects a matrix");
  const int n = s[0], m = s[1];
  Tensor out({n, m});
  const Scalar* p = a.value().data();
  Scalar* po = out.data();
  for (int i = 0; i < n; ++i) {
    const Scalar* row = p + static_cast<long>(i) * m;
    Scalar* orow = po + static_cast<long>(i) * m;
    Scalar mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    Scalar z = 0;
    for (int j = 0; j < m; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < m; ++j) orow[j] /= z;
  }
  Tensor saved = out;
  return Var::make(std::move(out), {a.node()}, [n, m, saved](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    const Scalar* y = saved.data();
    for (int i = 0; i < n; ++i) {
      const long off = static_cast<long>(i) * m;
      Scalar dyy = 0;
      for (int j = 0; j < m; ++j) dyy += dy[off + j] * y[off + j];
      for (int j = 0; j < m; ++j) dx[off + j] += y[off + j] * (dy[off + j] - dyy);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const auto& s = a.shape();
  if (s.size() != 2) throw std::invalid_argument("log_softmax_rows: expects a matrix");
  const int n = s[0], m = s[1];
  Tensor out({n, m});
  const Scalar* p = a.value().data();
  Scalar* po = out.data();
  for (int i = 0; i < n; ++i) {
    const Scalar* row = p + static_cast<long>(i) * m;
    Scalar* orow = po + static_cast<long>(i) * m;
    Scalar mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    Scalar z = 0;
    for (int j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const Scalar lz = mx + std::log(z);
    for (int j = 0; j < m; ++j) orow[j] = row[j] - lz;
  }
  Tensor saved = out;
  return Var::make(std::move(out), {a.node()}, [n, m, saved](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    const Scalar* y = saved.data();
    for (int i = 0; i < n; ++i) {
      const long off = static_cast<long>(i) * m;
      Scalar gsum = 0;
      for (int j = 0; j < m; ++j) gsum += dy[off + j];
      for (int j = 0; j < m; ++j) dx[off + j] += dy[off + j] - std::exp(y[off + j]) * gsum;
    }
  });
}

Var pick_rows(const Var& a, const std::vector<int>& idx) {
  const auto& s = a.shape();
  if (s.size() != 2 || static_cast<int>(idx.size()) != s[0])
    throw std::invalid_argument("pick_rows: bad index list");
  const int n = s[0], m = s[1];
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0 || idx[i] >= m) throw std::out_of_range("pick_rows: index out of range");
    out[i] = a.value()[static_cast<long>(i) * m + idx[i]];
  }
  return Var::make(std::move(out), {a.node()}, [idx, m](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (size_t i = 0; i < idx.size(); ++i) dx[i * m + idx[i]] += dy[i];
  });
}

Var logsumexp(const Var& v) {
  const Scalar* p = v.value().data();
  const long n = v.value().size();
  Scalar mx = p[0];
  for (long i = 1; i < n; ++i) mx = std::max(mx, p[i]);
  Scalar z = 0;
  for (long i = 0; i < n; ++i) z += std::exp(p[i] - mx);
  const Scalar lse = mx + std::log(z);
  return Var::make(Tensor::scalar(lse), {v.node()}, [lse](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Scalar g = self.grad[0];
    Scalar* dx = in.ensure_grad().data();
    const Scalar* x = in.value.data();
    for (long i = 0; i < in.value.size(); ++i) dx[i] += g * std::exp(x[i] - lse);
  });
}

Var cosine_rows(const Var& a, const Var& b) {
  check_same_shape(a, b, "cosine_rows");
  const auto& s = a.shape();
  if (s.size() != 2) throw std::invalid_argument("cosine_rows: expects matrices");
  const int n = s[0], d = s[1];
  Tensor out({n});
  const Scalar* pa = a.value().data();
  const Scalar* pb = b.value().data();
  for (int i = 0; i < n; ++i) {
    const Scalar* ra = pa + static_cast<long>(i) * d;
    const Scalar* rb = pb + static_cast<long>(i) * d;
    Scalar ab = 0, aa = 0, bb = 0;
    for (int j = 0; j < d; ++j) {
      ab += ra[j] * rb[j];
      aa += ra[j] * ra[j];
      bb += rb[j] * rb[j];
    }
    out[i] = (aa == 0.0 || bb == 0.0) ? 0.0 : ab / (std::sqrt(aa) * std::sqrt(bb));
  }
  return Var::make(std::move(out), {a.node(), b.node()}, [n, d](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const Scalar* pa = na.value.data();
    const Scalar* pb = nb.value.data();
    const Scalar* dy = self.grad.data();
    for (int i = 0; i < n; ++i) {
      const Scalar* ra = pa + static_cast<long>(i) * d;
      const Scalar* rb = pb + static_cast<long>(i) * d;
      Scalar ab = 0, aa = 0, bb = 0;
      for (int j = 0; j < d; ++j) {
        ab += ra[j] * rb[j];
        aa += ra[j] * ra[j];
        bb += rb[j] * rb[j];
      }
      if (aa == 0.0 || bb == 0.0) continue;  // cosine pinned to 0, zero gradient
      const Scalar na_ = std::sqrt(aa), nb_ = std::sqrt(bb);
      const Scalar c = ab / (na_ * nb_);
      const Scalar g = dy[i];
      if (na.requires_grad) {
        Scalar* da = na.ensure_grad().data() + static_cast<long>(i) * d;
        for (int j = 0; j < d; ++j) da[j] += g * (rb[j] / (na_ * nb_) - c * ra[j] / aa);
      }
      if (nb.requires_grad) {
        Scalar* db = nb.ensure_grad().data() + static_cast<long>(i) * d;
        for (int j = 0; j < d; ++j) db[j] += g * (ra[j] / (na_ * nb_) - c * rb[j] / bb);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Batch normalization (affine-free; modulation is applied by callers)

Var batch_norm_train(const Var& x, Tensor& running_mean, Tensor& running_var, Scalar momentum,
                     Scalar eps) {
  const auto& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("batch_norm: expects NCHW");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  const long m = static_cast<long>(N) * H * W;
  if (m < 2) throw std::invalid_argument("batch_norm: needs at least 2 samples per channel");
  Tensor mean({C}), var({C});
  const Scalar* px = x.value().data();
  const long hw = static_cast<long>(H) * W;
  for (int c = 0; c < C; ++c) {
    Scalar sum = 0;
    for (int n = 0; n < N; ++n) {
      const Scalar* plane = px + (static_cast<long>(n) * C + c) * hw;
      for (long i = 0; i < hw; ++i) sum += plane[i];
    }
    mean[c] = sum / m;
    Scalar sq = 0;
    for (int n = 0; n < N; ++n) {
      const Scalar* plane = px + (static_cast<long>(n) * C + c) * hw;
      for (long i = 0; i < hw; ++i) {
        const Scalar d = plane[i] - mean[c];
        sq += d * d;
      }
    }
    var[c] = sq / m;
  }
  // single-process run: batch statistics are globally synchronized by construction
  for (int c = 0; c < C; ++c) {
    running_mean[c] = (1 - momentum) * running_mean[c] + momentum * mean[c];
    running_var[c] = (1 - momentum) * running_var[c] + momentum * var[c] * m / (m - 1);
  }
  Tensor out({N, C, H, W});
  Tensor inv_std({C});
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Scalar* po = out.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Scalar* plane = px + (static_cast<long>(n) * C + c) * hw;
      Scalar* oplane = po + (static_cast<long>(n) * C + c) * hw;
      for (long i = 0; i < hw; ++i) oplane[i] = (plane[i] - mean[c]) * inv_std[c];
    }
  Tensor xhat = out;  // shared buffer; backward reads normalized values
  return Var::make(std::move(out), {x.node()}, [N, C, hw, m, xhat, inv_std](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    const Scalar* xh = xhat.data();
    for (int c = 0; c < C; ++c) {
      Scalar sum_dy = 0, sum_dy_xh = 0;
      for (int n = 0; n < N; ++n) {
        const long off = (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xh += dy[off + i] * xh[off + i];
        }
      }
      const Scalar istd = inv_std[c];
      for (int n = 0; n < N; ++n) {
        const long off = (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i)
          dx[off + i] +=
              istd * (dy[off + i] - sum_dy / m - xh[off + i] * sum_dy_xh / m);
      }
    }
  });
}

Var batch_norm_eval(const Var& x, const Tensor& mean, const Tensor& var, Scalar eps) {
  const auto& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("batch_norm: expects NCHW");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  const long hw = static_cast<long>(H) * W;
  Tensor out({N, C, H, W});
  Tensor inv_std({C});
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  const Scalar* px = x.value().data();
  Scalar* po = out.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Scalar* plane = px + (static_cast<long>(n) * C + c) * hw;
      Scalar* oplane = po + (static_cast<long>(n) * C + c) * hw;
      for (long i = 0; i < hw; ++i) oplane[i] = (plane[i] - mean[c]) * inv_std[c];
    }
  return Var::make(std::move(out), {x.node()}, [N, C, hw, inv_std](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dx = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const long off = (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) dx[off + i] += dy[off + i] * inv_std[c];
      }
  });
}

Var embedding_rows(const Var& table, const std::vector<int>& idx) {
  const auto& s = table.shape();
  if (s.size() != 2) throw std::invalid_argument("embedding_rows: table must be 2-d");
  const int v = s[0], d = s[1];
  const int n = static_cast<int>(idx.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0 || idx[i] >= v) throw std::out_of_range("embedding_rows: index out of range");
    std::copy(table.value().data() + static_cast<long>(idx[i]) * d,
              table.value().data() + static_cast<long>(idx[i] + 1) * d,
              out.data() + static_cast<long>(i) * d);
  }
  return Var::make(std::move(out), {table.node()}, [idx, d](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Scalar* dt = in.ensure_grad().data();
    const Scalar* dy = self.grad.data();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < d; ++j) dt[static_cast<long>(idx[i]) * d + j] += dy[i * d + j];
  });
}

Tensor bilinear_resize(const Tensor& src, int out_h, int out_w) {
  if (src.ndim() != 3) throw std::invalid_argument("bilinear_resize: expects (C,h,w)");
  const int C = src.dim(0), h = src.dim(1), w = src.dim(2);
  Tensor out({C, out_h, out_w});
  for (int oy = 0; oy < out_h; ++oy) {
    Scalar sy = (oy + 0.5) * h / out_h - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<Scalar>(h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const Scalar fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      Scalar sx = (ox + 0.5) * w / out_w - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<Scalar>(w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, w - 1);
      const Scalar fx = sx - x0;
      for (int c = 0; c < C; ++c) {
        const Scalar v = (1 - fy) * ((1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1)) +
                         fy * ((1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1));
        out.at(c, oy, ox) = v;
      }
    }
  }
  return out;
}

}  // namespace ocgan::nn
