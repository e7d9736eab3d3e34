#include "remtkd/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace remtkd::ag {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Map = Eigen::Map<MatR<T>>;
template <class T>
using CMap = Eigen::Map<const MatR<T>>;

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

// Source index/weight pairs for one axis of a bilinear resize
// (half-pixel centers, edge clamped).
struct Lerp {
  int i0, i1;
  double w0, w1;
};

std::vector<Lerp> lerp_table(int in, int out) {
  std::vector<Lerp> tab(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = std::min(static_cast<int>(src), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    double w1 = src - i0;
    tab[o] = {i0, i1, 1.0 - w1, w1};
  }
  return tab;
}

template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix < 0 || ix >= w) ? T(0) : src[ix];
          }
        }
      }
}

template <class T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

template <class T>
int Tape<T>::add(Tensor<T> value, bool requires_grad, Backward bw) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::parameter(const ParamStore<T>& store, std::size_t index) {
  const auto& e = store.entries()[index];
  auto v = store.view(index);
  int id = add(Tensor<T>(e.shape, std::vector<T>(v.begin(), v.end())), true);
  nodes_[id].param_offset = static_cast<long>(e.offset);
  return id;
}

template <class T>
Tensor<T>& Tape<T>::grad(int id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape);
  return n.grad;
}

template <class T>
void Tape<T>::seed(int id, std::span<const T> g) {
  require(g.size() == nodes_[id].value.size(), "seed gradient size mismatch");
  if (!nodes_[id].requires_grad) return;
  auto& dst = grad(id).data;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <class T>
void Tape<T>::backward(std::span<T> param_grads) {
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    auto& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param_offset >= 0) {
      require(n.param_offset + n.grad.size() <= param_grads.size(), "parameter gradient sink too small");
      T* dst = param_grads.data() + n.param_offset;
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad.data[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

template <class T>
int conv2d(Tape<T>& t, int x, int w, int b, int stride, int pad) {
  const auto& xs = t.shape(x);
  const auto& ws = t.shape(w);
  require(xs.size() == 3 && ws.size() == 4, "conv2d expects {C,H,W} input and {O,C,k,k} weight");
  const int c = xs[0], h = xs[1], wd = xs[2];
  const int o = ws[0], k = ws[2];
  require(ws[1] == c && ws[3] == k, "conv2d weight/input channel mismatch");
  if (b >= 0) require(t.shape(b).size() == 1 && t.shape(b)[0] == o, "conv2d bias shape mismatch");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d output would be empty");
  const int ckk = c * k * k;
  const int hw = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  std::vector<T> cols;
  const T* colp = t.value(x).ptr();
  if (!direct) {
    cols.resize(static_cast<std::size_t>(ckk) * hw);
    im2col(t.value(x).ptr(), c, h, wd, k, stride, pad, ho, wo, cols.data());
    colp = cols.data();
  }
  Tensor<T> out({o, ho, wo});
  Map<T>(out.ptr(), o, hw).noalias() = CMap<T>(t.value(w).ptr(), o, ckk) * CMap<T>(colp, ckk, hw);
  if (b >= 0) {
    const T* bp = t.value(b).ptr();
    for (int oc = 0; oc < o; ++oc) {
      T* row = out.ptr() + static_cast<std::size_t>(oc) * hw;
      for (int i = 0; i < hw; ++i) row[i] += bp[oc];
    }
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(w) || (b >= 0 && t.requires_grad(b));
  if (!rg || !t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true,
               [=, cols = std::move(cols)](Tape<T>& tp, int self) {
                 CMap<T> g(tp.grad(self).ptr(), o, hw);
                 const T* cp = direct ? tp.value(x).ptr() : cols.data();
                 CMap<T> cm(cp, ckk, hw);
                 if (tp.requires_grad(w)) Map<T>(tp.grad(w).ptr(), o, ckk).noalias() += g * cm.transpose();
                 if (b >= 0 && tp.requires_grad(b)) {
                   T* db = tp.grad(b).ptr();
                   // plain loop: Eigen's vectorized sum depends on buffer alignment
                   const T* gp = tp.grad(self).ptr();
                   for (int oc = 0; oc < o; ++oc) {
                     T s = 0;
                     for (int i = 0; i < hw; ++i) s += gp[static_cast<std::size_t>(oc) * hw + i];
                     db[oc] += s;
                   }
                 }
                 if (tp.requires_grad(x)) {
                   CMap<T> wm(tp.value(w).ptr(), o, ckk);
                   if (direct) {
                     Map<T>(tp.grad(x).ptr(), ckk, hw).noalias() += wm.transpose() * g;
                   } else {
                     MatR<T> dcols = wm.transpose() * g;
                     col2im(dcols.data(), c, h, wd, k, stride, pad, ho, wo, tp.grad(x).ptr());
                   }
                 }
               });
}

template <class T>
int depthwise_conv2d(Tape<T>& t, int x, int w, int b, int pad) {
  const auto& xs = t.shape(x);
  const auto& ws = t.shape(w);
  require(xs.size() == 3 && ws.size() == 4 && ws[1] == 1, "depthwise conv expects {C,1,k,k} weight");
  const int c = xs[0], h = xs[1], wd = xs[2], k = ws[2];
  require(ws[0] == c, "depthwise conv channel mismatch");
  const int ho = h + 2 * pad - k + 1, wo = wd + 2 * pad - k + 1;
  require(ho > 0 && wo > 0, "depthwise conv output would be empty");
  const T* xp = t.value(x).ptr();
  const T* wp = t.value(w).ptr();
  Tensor<T> out({c, ho, wo});
  // Tap-major loops keep the innermost loop a contiguous row update.
  for (int ci = 0; ci < c; ++ci) {
    T* op = out.ptr() + static_cast<std::size_t>(ci) * ho * wo;
    std::fill(op, op + static_cast<std::size_t>(ho) * wo, b >= 0 ? t.value(b).data[ci] : T(0));
    const T* xc = xp + static_cast<std::size_t>(ci) * h * wd;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T wv = wp[(ci * k + ky) * k + kx];
        const int ox0 = std::max(0, pad - kx), ox1 = std::min(wo, wd + pad - kx);
        for (int oy = std::max(0, pad - ky); oy < std::min(ho, h + pad - ky); ++oy) {
          const T* xr = xc + static_cast<std::size_t>(oy - pad + ky) * wd - pad + kx;
          T* orow = op + static_cast<std::size_t>(oy) * wo;
          for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xr[ox];
        }
      }
  }
  if (!t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true, [=](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    const T* xv = tp.value(x).ptr();
    const T* wv = tp.value(w).ptr();
    T* dx = tp.requires_grad(x) ? tp.grad(x).ptr() : nullptr;
    T* dw = tp.requires_grad(w) ? tp.grad(w).ptr() : nullptr;
    T* db = (b >= 0 && tp.requires_grad(b)) ? tp.grad(b).ptr() : nullptr;
    for (int ci = 0; ci < c; ++ci) {
      const T* gc = g.ptr() + static_cast<std::size_t>(ci) * ho * wo;
      if (db)
        for (int i = 0; i < ho * wo; ++i) db[ci] += gc[i];
      const std::size_t xoff = static_cast<std::size_t>(ci) * h * wd;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int wi = (ci * k + ky) * k + kx;
          const int ox0 = std::max(0, pad - kx), ox1 = std::min(wo, wd + pad - kx);
          T acc = 0;
          for (int oy = std::max(0, pad - ky); oy < std::min(ho, h + pad - ky); ++oy) {
            const std::size_t xr = xoff + static_cast<std::size_t>(oy - pad + ky) * wd - pad + kx;
            const T* grow = gc + static_cast<std::size_t>(oy) * wo;
            if (dw)
              for (int ox = ox0; ox < ox1; ++ox) acc += grow[ox] * xv[xr + ox];
            if (dx)
              for (int ox = ox0; ox < ox1; ++ox) dx[xr + ox] += grow[ox] * wv[wi];
          }
          if (dw) dw[wi] += acc;
        }
    }
  });
}

template <class T>
int layer_norm_channels(Tape<T>& t, int x, int gamma, int beta, T eps) {
  const auto& xs = t.shape(x);
  require(xs.size() == 3, "layer norm expects {C,H,W}");
  const int c = xs[0];
  const std::size_t hw = static_cast<std::size_t>(xs[1]) * xs[2];
  require(t.value(gamma).size() == static_cast<std::size_t>(c) &&
              t.value(beta).size() == static_cast<std::size_t>(c),
          "layer norm affine shape mismatch");
  const T* xp = t.value(x).ptr();
  std::vector<T> mean(hw, T(0)), inv(hw, T(0));
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i) mean[i] += xp[ci * hw + i];
  for (auto& m : mean) m /= T(c);
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i) {
      const T d = xp[ci * hw + i] - mean[i];
      inv[i] += d * d;
    }
  for (auto& v : inv) v = T(1) / std::sqrt(v / T(c) + eps);
  Tensor<T> xhat(xs);
  Tensor<T> out(xs);
  const T* gp = t.value(gamma).ptr();
  const T* bp = t.value(beta).ptr();
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i) {
      const T n = (xp[ci * hw + i] - mean[i]) * inv[i];
      xhat.data[ci * hw + i] = n;
      out.data[ci * hw + i] = gp[ci] * n + bp[ci];
    }
  if (!t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true,
               [=, xhat = std::move(xhat), inv = std::move(inv)](Tape<T>& tp, int self) {
                 const T* g = tp.grad(self).ptr();
                 const T* gm = tp.value(gamma).ptr();
                 if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
                   T* dg = tp.grad(gamma).ptr();
                   T* dbt = tp.grad(beta).ptr();
                   for (int ci = 0; ci < c; ++ci) {
                     T sg = 0, sb = 0;
                     for (std::size_t i = 0; i < hw; ++i) {
                       sg += g[ci * hw + i] * xhat.data[ci * hw + i];
                       sb += g[ci * hw + i];
                     }
                     dg[ci] += sg;
                     dbt[ci] += sb;
                   }
                 }
                 if (!tp.requires_grad(x)) return;
                 std::vector<T> m1(hw, T(0)), m2(hw, T(0));
                 for (int ci = 0; ci < c; ++ci)
                   for (std::size_t i = 0; i < hw; ++i) {
                     const T gh = g[ci * hw + i] * gm[ci];
                     m1[i] += gh;
                     m2[i] += gh * xhat.data[ci * hw + i];
                   }
                 for (std::size_t i = 0; i < hw; ++i) {
                   m1[i] /= T(c);
                   m2[i] /= T(c);
                 }
                 T* dx = tp.grad(x).ptr();
                 for (int ci = 0; ci < c; ++ci)
                   for (std::size_t i = 0; i < hw; ++i) {
                     const T gh = g[ci * hw + i] * gm[ci];
                     dx[ci * hw + i] += inv[i] * (gh - m1[i] - xhat.data[ci * hw + i] * m2[i]);
                   }
               });
}

namespace {

template <class T, class Fwd, class Deriv>
int unary(Tape<T>& t, int x, Fwd f, Deriv df) {
  const auto& xv = t.value(x);
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = f(xv.data[i]);
  if (!t.requires_grad(x) || !t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true, [=](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self).data;
    const auto& in = tp.value(x).data;
    const auto& y = tp.value(self).data;
    auto& dx = tp.grad(x).data;
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * df(in[i], y[i]);
  });
}

}  // namespace

template <class T>
int gelu(Tape<T>& t, int x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return unary(
      t, x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

template <class T>
int relu(Tape<T>& t, int x) {
  return unary(
      t, x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
int sigmoid(Tape<T>& t, int x) {
  return unary(
      t, x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
int add(Tape<T>& t, int a, int b) {
  require(t.shape(a) == t.shape(b), "add: shape mismatch");
  Tensor<T> out = t.value(a);
  const auto& bv = t.value(b).data;
  for (std::size_t i = 0; i < bv.size(); ++i) out.data[i] += bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  if (!rg || !t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true, [=](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self).data;
    for (int in : {a, b}) {
      if (!tp.requires_grad(in)) continue;
      auto& d = tp.grad(in).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <class T>
int upsample_bilinear(Tape<T>& t, int x, int out_h, int out_w) {
  const auto& xs = t.shape(x);
  require(xs.size() == 3, "upsample expects {C,H,W}");
  const int c = xs[0], h = xs[1], w = xs[2];
  if (h == out_h && w == out_w) return x;
  const auto ty = lerp_table(h, out_h);
  const auto tx = lerp_table(w, out_w);
  const auto& xv = t.value(x);
  // Separable: interpolate along x into {C,H,out_w}, then along y.
  Tensor<T> mid({c, h, out_w});
  for (int r = 0; r < c * h; ++r) {
    const T* src = xv.ptr() + static_cast<std::size_t>(r) * w;
    T* dst = mid.ptr() + static_cast<std::size_t>(r) * out_w;
    for (int ox = 0; ox < out_w; ++ox)
      dst[ox] = static_cast<T>(tx[ox].w0 * src[tx[ox].i0] + tx[ox].w1 * src[tx[ox].i1]);
  }
  Tensor<T> out({c, out_h, out_w});
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& ly = ty[oy];
      const T* r0 = mid.ptr() + (static_cast<std::size_t>(ci) * h + ly.i0) * out_w;
      const T* r1 = mid.ptr() + (static_cast<std::size_t>(ci) * h + ly.i1) * out_w;
      T* dst = out.ptr() + (static_cast<std::size_t>(ci) * out_h + oy) * out_w;
      const T w0 = static_cast<T>(ly.w0), w1 = static_cast<T>(ly.w1);
      for (int ox = 0; ox < out_w; ++ox) dst[ox] = w0 * r0[ox] + w1 * r1[ox];
    }
  if (!t.requires_grad(x) || !t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true, [=](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    std::vector<T> gmid(static_cast<std::size_t>(c) * h * out_w, T(0));
    for (int ci = 0; ci < c; ++ci)
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& ly = ty[oy];
        T* r0 = gmid.data() + (static_cast<std::size_t>(ci) * h + ly.i0) * out_w;
        T* r1 = gmid.data() + (static_cast<std::size_t>(ci) * h + ly.i1) * out_w;
        const T* src = g.ptr() + (static_cast<std::size_t>(ci) * out_h + oy) * out_w;
        const T w0 = static_cast<T>(ly.w0), w1 = static_cast<T>(ly.w1);
        for (int ox = 0; ox < out_w; ++ox) {
          r0[ox] += w0 * src[ox];
          r1[ox] += w1 * src[ox];
        }
      }
    T* dx = tp.grad(x).ptr();
    for (int r = 0; r < c * h; ++r) {
      const T* src = gmid.data() + static_cast<std::size_t>(r) * out_w;
      T* dst = dx + static_cast<std::size_t>(r) * w;
      for (int ox = 0; ox < out_w; ++ox) {
        dst[tx[ox].i0] += static_cast<T>(tx[ox].w0) * src[ox];
        dst[tx[ox].i1] += static_cast<T>(tx[ox].w1) * src[ox];
      }
    }
  });
}

template <class T>
int adaptive_avg_pool(Tape<T>& t, int x, int out_h, int out_w) {
  const auto& xs = t.shape(x);
  require(xs.size() == 3 && out_h > 0 && out_w > 0, "adaptive pool expects {C,H,W} and positive bins");
  const int c = xs[0], h = xs[1], w = xs[2];
  auto bounds = [](int i, int in, int out) {
    const int s = (i * in) / out;
    const int e = ((i + 1) * in + out - 1) / out;
    return std::pair{s, e};
  };
  const auto& xv = t.value(x);
  Tensor<T> out({c, out_h, out_w});
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < out_h; ++oy) {
      auto [y0, y1] = bounds(oy, h, out_h);
      for (int ox = 0; ox < out_w; ++ox) {
        auto [x0, x1] = bounds(ox, w, out_w);
        T acc = 0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) acc += xv.at(ci, y, xx);
        out.at(ci, oy, ox) = acc / T((y1 - y0) * (x1 - x0));
      }
    }
  if (!t.requires_grad(x) || !t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true, [=](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    auto& dx = tp.grad(x);
    for (int ci = 0; ci < c; ++ci)
      for (int oy = 0; oy < out_h; ++oy) {
        auto [y0, y1] = bounds(oy, h, out_h);
        for (int ox = 0; ox < out_w; ++ox) {
          auto [x0, x1] = bounds(ox, w, out_w);
          const T share = g.at(ci, oy, ox) / T((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) dx.at(ci, y, xx) += share;
        }
      }
  });
}

template <class T>
int concat_channels(Tape<T>& t, std::span<const int> xs) {
  require(!xs.empty(), "concat of nothing");
  const int h = t.shape(xs[0])[1], w = t.shape(xs[0])[2];
  int c = 0;
  bool rg = false;
  for (int id : xs) {
    require(t.shape(id).size() == 3 && t.shape(id)[1] == h && t.shape(id)[2] == w,
            "concat: spatial size mismatch");
    c += t.shape(id)[0];
    rg = rg || t.requires_grad(id);
  }
  Tensor<T> out({c, h, w});
  std::size_t pos = 0;
  for (int id : xs) {
    const auto& v = t.value(id).data;
    std::copy(v.begin(), v.end(), out.data.begin() + static_cast<long>(pos));
    pos += v.size();
  }
  if (!rg || !t.grad_enabled()) return t.add(std::move(out), false);
  std::vector<int> ids(xs.begin(), xs.end());
  return t.add(std::move(out), true, [ids](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self).data;
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t n = tp.value(id).size();
      if (tp.requires_grad(id)) {
        auto& d = tp.grad(id).data;
        for (std::size_t i = 0; i < n; ++i) d[i] += g[off + i];
      }
      off += n;
    }
  });
}

template <class T>
int global_avg_pool(Tape<T>& t, int x) {
  const auto& xs = t.shape(x);
  require(xs.size() == 3, "global pool expects {C,H,W}");
  const int c = xs[0];
  const std::size_t hw = static_cast<std::size_t>(xs[1]) * xs[2];
  const auto& xv = t.value(x).data;
  Tensor<T> out({c, 1, 1});
  for (int ci = 0; ci < c; ++ci) {
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += xv[ci * hw + i];
    out.data[ci] = acc / T(hw);
  }
  if (!t.requires_grad(x) || !t.grad_enabled()) return t.add(std::move(out), false);
  return t.add(std::move(out), true, [=](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self).data;
    auto& d = tp.grad(x).data;
    for (int ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < hw; ++i) d[ci * hw + i] += g[ci] / T(hw);
  });
}

#define REMTKD_INSTANTIATE(T)                                                   \
  template class Tape<T>;                                                       \
  template int conv2d<T>(Tape<T>&, int, int, int, int, int);                    \
  template int depthwise_conv2d<T>(Tape<T>&, int, int, int, int);               \
  template int layer_norm_channels<T>(Tape<T>&, int, int, int, T);              \
  template int gelu<T>(Tape<T>&, int);                                          \
  template int relu<T>(Tape<T>&, int);                                          \
  template int sigmoid<T>(Tape<T>&, int);                                       \
  template int add<T>(Tape<T>&, int, int);                                      \
  template int upsample_bilinear<T>(Tape<T>&, int, int, int);                   \
  template int adaptive_avg_pool<T>(Tape<T>&, int, int, int);                   \
  template int concat_channels<T>(Tape<T>&, std::span<const int>);              \
  template int global_avg_pool<T>(Tape<T>&, int);

REMTKD_INSTANTIATE(float)
REMTKD_INSTANTIATE(double)

#undef REMTKD_INSTANTIATE

}  // namespace remtkd::ag
