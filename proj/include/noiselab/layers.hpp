#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "noiselab/tensor.hpp"

namespace noiselab {

// ---------------------------------------------------------------------------
// Layer kinds
// ---------------------------------------------------------------------------

struct FullyConnected {
  Index in = 0, out = 0;
};
struct Conv2d {
  Index in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
};
struct ReLU {};
struct MaxPool2d {
  Index kernel = 2, stride = 2;
};
struct BatchNorm {
  Index features = 0;
};
struct Flatten {};
/// Marker layer at which activation noise may act. Auto-inserted by
/// build_model; id is the position in the canonical enumeration.
struct InjectionPoint {
  int id = -1;
};

using LayerKind =
    std::variant<FullyConnected, Conv2d, ReLU, MaxPool2d, BatchNorm, Flatten, InjectionPoint>;

struct LayerSpec {
  LayerKind kind;
  std::string name;
};

inline const char* kind_str(const LayerKind& k) {
  struct V {
    const char* operator()(const FullyConnected&) const { return "fc"; }
    const char* operator()(const Conv2d&) const { return "conv"; }
    const char* operator()(const ReLU&) const { return "relu"; }
    const char* operator()(const MaxPool2d&) const { return "maxpool"; }
    const char* operator()(const BatchNorm&) const { return "batchnorm"; }
    const char* operator()(const Flatten&) const { return "flatten"; }
    const char* operator()(const InjectionPoint&) const { return "inject"; }
  };
  return std::visit(V{}, k);
}

inline bool is_learnable(const LayerKind& k) {
  return std::holds_alternative<FullyConnected>(k) || std::holds_alternative<Conv2d>(k);
}

/// Activation dims excluding the batch axis: either an image (c,h,w) or a
/// flat feature vector.
struct ActDims {
  bool flat = false;
  Index c = 0, h = 0, w = 0;  // image form
  Index features = 0;         // flat form

  static ActDims image(Index c, Index h, Index w) { return {false, c, h, w, 0}; }
  static ActDims vec(Index f) { return {true, 0, 0, 0, f}; }
  Index numel() const { return flat ? features : c * h * w; }
  std::string str() const {
    return flat ? cat("(", features, ")") : cat("(", c, "x", h, "x", w, ")");
  }
};

// ---------------------------------------------------------------------------
// Per-layer parameter/state block
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LayerStateT {
  // FC: weight (out x in), bias (out). Conv: weight (out_ch x in_ch x k x k),
  // bias (out_ch). BatchNorm: gamma/beta plus running stats (features).
  TensorT<Scalar> weight, bias;
  TensorT<Scalar> gamma, beta, run_mean, run_var;

  template <typename Other>
  LayerStateT<Other> cast() const {
    LayerStateT<Other> o;
    o.weight = weight.template cast<Other>();
    o.bias = bias.template cast<Other>();
    o.gamma = gamma.template cast<Other>();
    o.beta = beta.template cast<Other>();
    o.run_mean = run_mean.template cast<Other>();
    o.run_var = run_var.template cast<Other>();
    return o;
  }
};

template <typename Scalar>
struct LayerGradsT {
  TensorT<Scalar> weight, bias, gamma, beta;
};

/// Saved forward quantities a layer needs for its backward pass.
template <typename Scalar>
struct LayerAuxT {
  TensorT<Scalar> cols;            // conv: im2col patches {N, CKK, HoWo}
  std::vector<Index> argmax;       // maxpool: flat input index per output element
  Eigen::ArrayXd bn_mean, bn_inv;  // batchnorm: per-feature batch stats
  TensorT<Scalar> bn_xhat;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

template <typename Scalar>
TensorT<Scalar> fc_forward(const FullyConnected& fc, const LayerStateT<Scalar>& st,
                           const TensorT<Scalar>& x) {
  const Index n = x.dim(0);
  TensorT<Scalar> y = TensorT<Scalar>::zeros({n, fc.out});
  auto X = x.mat(n, fc.in);
  auto W = st.weight.mat(fc.out, fc.in);
  auto Y = y.mat(n, fc.out);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += st.bias.mat(1, fc.out).row(0);
  return y;
}

template <typename Scalar>
TensorT<Scalar> fc_backward(const FullyConnected& fc, const LayerStateT<Scalar>& st,
                            const TensorT<Scalar>& x, const TensorT<Scalar>& dy,
                            LayerGradsT<Scalar>& g) {
  const Index n = x.dim(0);
  auto X = x.mat(n, fc.in);
  auto dY = dy.mat(n, fc.out);
  auto W = st.weight.mat(fc.out, fc.in);
  g.weight = TensorT<Scalar>::zeros({fc.out, fc.in});
  g.bias = TensorT<Scalar>::zeros({fc.out});
  g.weight.mat(fc.out, fc.in).noalias() = dY.transpose() * X;
  g.bias.mat(1, fc.out).row(0) = dY.colwise().sum();
  TensorT<Scalar> dx = TensorT<Scalar>::zeros({n, fc.in});
  dx.mat(n, fc.in).noalias() = dY * W;
  return dx;
}

inline Index conv_out_dim(Index in, Index kernel, Index stride, Index pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename Scalar>
void im2col(const Conv2d& cv, const Scalar* x, Index h, Index w, Scalar* cols, Index ho,
            Index wo) {
  // cols layout: (in_ch*k*k) x (ho*wo), row-major
  const Index k = cv.kernel;
  for (Index c = 0; c < cv.in_ch; ++c) {
    const Scalar* xc = x + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols + ((c * k + ky) * k + kx) * (ho * wo);
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * cv.stride + ky - cv.pad;
          if (iy < 0 || iy >= h) {
            for (Index ox = 0; ox < wo; ++ox) row[oy * wo + ox] = Scalar(0);
            continue;
          }
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * cv.stride + kx - cv.pad;
            row[oy * wo + ox] = (ix >= 0 && ix < w) ? xc[iy * w + ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Conv2d& cv, const Scalar* cols, Index h, Index w, Scalar* dx, Index ho,
                Index wo) {
  const Index k = cv.kernel;
  for (Index c = 0; c < cv.in_ch; ++c) {
    Scalar* xc = dx + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols + ((c * k + ky) * k + kx) * (ho * wo);
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * cv.stride + ky - cv.pad;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * cv.stride + kx - cv.pad;
            if (ix >= 0 && ix < w) xc[iy * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
TensorT<Scalar> conv_forward(const Conv2d& cv, const LayerStateT<Scalar>& st,
                             const TensorT<Scalar>& x, ActDims in, LayerAuxT<Scalar>* aux) {
  const Index n = x.dim(0);
  const Index ho = conv_out_dim(in.h, cv.kernel, cv.stride, cv.pad);
  const Index wo = conv_out_dim(in.w, cv.kernel, cv.stride, cv.pad);
  const Index ckk = cv.in_ch * cv.kernel * cv.kernel;
  TensorT<Scalar> cols = TensorT<Scalar>::zeros({n, ckk, ho * wo});
  TensorT<Scalar> y = TensorT<Scalar>::zeros({n, cv.out_ch, ho, wo});
  auto W = st.weight.mat(cv.out_ch, ckk);
  using Mat = typename TensorT<Scalar>::Matrix;
  for (Index i = 0; i < n; ++i) {
    Scalar* ci = cols.data.data() + i * ckk * ho * wo;
    im2col(cv, x.data.data() + i * in.numel(), in.h, in.w, ci, ho, wo);
    Eigen::Map<Mat> C(ci, ckk, ho * wo);
    Eigen::Map<Mat> Y(y.data.data() + i * cv.out_ch * ho * wo, cv.out_ch, ho * wo);
    Y.noalias() = W * C;
    Y.colwise() += st.bias.mat(cv.out_ch, 1).col(0);
  }
  if (aux) aux->cols = std::move(cols);
  return y;
}

template <typename Scalar>
TensorT<Scalar> conv_backward(const Conv2d& cv, const LayerStateT<Scalar>& st,
                              const TensorT<Scalar>& x, ActDims in, const LayerAuxT<Scalar>& aux,
                              const TensorT<Scalar>& dy, LayerGradsT<Scalar>& g) {
  const Index n = x.dim(0);
  const Index ho = conv_out_dim(in.h, cv.kernel, cv.stride, cv.pad);
  const Index wo = conv_out_dim(in.w, cv.kernel, cv.stride, cv.pad);
  const Index ckk = cv.in_ch * cv.kernel * cv.kernel;
  g.weight = TensorT<Scalar>::zeros({cv.out_ch, cv.in_ch, cv.kernel, cv.kernel});
  g.bias = TensorT<Scalar>::zeros({cv.out_ch});
  TensorT<Scalar> dx = TensorT<Scalar>::zeros(x.shape);
  TensorT<Scalar> dcols = TensorT<Scalar>::zeros({ckk, ho * wo});
  auto W = st.weight.mat(cv.out_ch, ckk);
  auto dW = g.weight.mat(cv.out_ch, ckk);
  auto db = g.bias.mat(cv.out_ch, 1);
  using Mat = typename TensorT<Scalar>::Matrix;
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const Mat> C(aux.cols.data.data() + i * ckk * ho * wo, ckk, ho * wo);
    Eigen::Map<const Mat> dY(dy.data.data() + i * cv.out_ch * ho * wo, cv.out_ch, ho * wo);
    dW.noalias() += dY * C.transpose();
    db.col(0) += dY.rowwise().sum();
    auto dC = dcols.mat(ckk, ho * wo);
    dC.noalias() = W.transpose() * dY;
    col2im_add(cv, dcols.data.data(), in.h, in.w, dx.data.data() + i * in.numel(), ho, wo);
  }
  return dx;
}

template <typename Scalar>
TensorT<Scalar> relu_forward(const TensorT<Scalar>& x) {
  TensorT<Scalar> y = x;
  y.data = y.data.max(Scalar(0));
  return y;
}

template <typename Scalar>
TensorT<Scalar> relu_backward(const TensorT<Scalar>& x, const TensorT<Scalar>& dy) {
  TensorT<Scalar> dx = dy;
  dx.data = (x.data > Scalar(0)).select(dx.data, Scalar(0));
  return dx;
}

template <typename Scalar>
TensorT<Scalar> maxpool_forward(const MaxPool2d& mp, const TensorT<Scalar>& x, ActDims in,
                                LayerAuxT<Scalar>* aux) {
  const Index n = x.dim(0);
  const Index ho = (in.h - mp.kernel) / mp.stride + 1;
  const Index wo = (in.w - mp.kernel) / mp.stride + 1;
  TensorT<Scalar> y = TensorT<Scalar>::zeros({n, in.c, ho, wo});
  std::vector<Index> argmax(static_cast<std::size_t>(n * in.c * ho * wo));
  const Scalar* xd = x.data.data();
  Scalar* yd = y.data.data();
  Index o = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < in.c; ++c) {
      const Scalar* plane = xd + (i * in.c + c) * in.h * in.w;
      const Index plane_off = (i * in.c + c) * in.h * in.w;
      for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox, ++o) {
          Index best = 0;
          Scalar bv = std::numeric_limits<Scalar>::lowest();
          for (Index ky = 0; ky < mp.kernel; ++ky) {
            for (Index kx = 0; kx < mp.kernel; ++kx) {
              const Index iy = oy * mp.stride + ky;
              const Index ix = ox * mp.stride + kx;
              const Scalar v = plane[iy * in.w + ix];
              if (v > bv) {
                bv = v;
                best = iy * in.w + ix;
              }
            }
          }
          yd[o] = bv;
          argmax[static_cast<std::size_t>(o)] = plane_off + best;
        }
      }
    }
  }
  if (aux) aux->argmax = std::move(argmax);
  return y;
}

template <typename Scalar>
TensorT<Scalar> maxpool_backward(const TensorT<Scalar>& x, const LayerAuxT<Scalar>& aux,
                                 const TensorT<Scalar>& dy) {
  TensorT<Scalar> dx = TensorT<Scalar>::zeros(x.shape);
  for (Index o = 0; o < dy.numel(); ++o)
    dx.data[aux.argmax[static_cast<std::size_t>(o)]] += dy.data[o];
  return dx;
}

namespace bndetail {
// (count per feature, stride walk) for 2D [N,F] and 4D [N,C,H,W] inputs.
template <typename Scalar, typename Fn>
void per_feature(const TensorT<Scalar>& x, Index features, Fn&& fn) {
  const Index n = x.dim(0);
  if (x.rank() == 2) {
    for (Index i = 0; i < n; ++i)
      for (Index f = 0; f < features; ++f) fn(f, i * features + f);
  } else {
    const Index hw = x.dim(2) * x.dim(3);
    for (Index i = 0; i < n; ++i)
      for (Index f = 0; f < features; ++f) {
        const Index base = (i * features + f) * hw;
        for (Index s = 0; s < hw; ++s) fn(f, base + s);
      }
  }
}
template <typename Scalar>
Index group_count(const TensorT<Scalar>& x) {
  return x.rank() == 2 ? x.dim(0) : x.dim(0) * x.dim(2) * x.dim(3);
}
}  // namespace bndetail

/// BatchNorm forward. Training mode normalizes with batch statistics and
/// updates running stats (unbiased variance); eval mode uses running stats.
/// Statistics accumulate in double.
template <typename Scalar>
TensorT<Scalar> bn_forward(const BatchNorm& bn, LayerStateT<Scalar>& st, const TensorT<Scalar>& x,
                           bool training, LayerAuxT<Scalar>* aux) {
  const Index f_count = bn.features;
  const Index m = bndetail::group_count(x);
  check(m >= 1, "batchnorm on empty batch");
  Eigen::ArrayXd mean(f_count), inv_std(f_count);
  if (training) {
    Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(f_count), sq = Eigen::ArrayXd::Zero(f_count);
    bndetail::per_feature(x, f_count, [&](Index f, Index idx) {
      const double v = static_cast<double>(x.data[idx]);
      sum[f] += v;
      sq[f] += v * v;
    });
    mean = sum / static_cast<double>(m);
    Eigen::ArrayXd var = (sq / static_cast<double>(m) - mean.square()).max(0.0);
    inv_std = (var + kBnEps).rsqrt();
    const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
    for (Index f = 0; f < f_count; ++f) {
      st.run_mean.data[f] = static_cast<Scalar>((1.0 - kBnMomentum) * st.run_mean.data[f] +
                                                kBnMomentum * mean[f]);
      st.run_var.data[f] = static_cast<Scalar>((1.0 - kBnMomentum) * st.run_var.data[f] +
                                               kBnMomentum * var[f] * unbias);
    }
  } else {
    for (Index f = 0; f < f_count; ++f) {
      mean[f] = static_cast<double>(st.run_mean.data[f]);
      inv_std[f] = 1.0 / std::sqrt(static_cast<double>(st.run_var.data[f]) + kBnEps);
    }
  }
  TensorT<Scalar> y = TensorT<Scalar>::zeros(x.shape);
  TensorT<Scalar> xhat = TensorT<Scalar>::zeros(x.shape);
  bndetail::per_feature(x, f_count, [&](Index f, Index idx) {
    const double h = (static_cast<double>(x.data[idx]) - mean[f]) * inv_std[f];
    xhat.data[idx] = static_cast<Scalar>(h);
    y.data[idx] = static_cast<Scalar>(static_cast<double>(st.gamma.data[f]) * h +
                                      static_cast<double>(st.beta.data[f]));
  });
  if (aux) {
    aux->bn_mean = std::move(mean);
    aux->bn_inv = std::move(inv_std);
    aux->bn_xhat = std::move(xhat);
  }
  return y;
}

template <typename Scalar>
TensorT<Scalar> bn_backward(const BatchNorm& bn, const LayerStateT<Scalar>& st,
                            const TensorT<Scalar>& x, const LayerAuxT<Scalar>& aux,
                            const TensorT<Scalar>& dy, LayerGradsT<Scalar>& g) {
  const Index f_count = bn.features;
  const Index m = bndetail::group_count(x);
  Eigen::ArrayXd dsum = Eigen::ArrayXd::Zero(f_count), dxhsum = Eigen::ArrayXd::Zero(f_count);
  bndetail::per_feature(x, f_count, [&](Index f, Index idx) {
    const double d = static_cast<double>(dy.data[idx]);
    dsum[f] += d;
    dxhsum[f] += d * static_cast<double>(aux.bn_xhat.data[idx]);
  });
  g.gamma = TensorT<Scalar>::zeros({f_count});
  g.beta = TensorT<Scalar>::zeros({f_count});
  for (Index f = 0; f < f_count; ++f) {
    g.gamma.data[f] = static_cast<Scalar>(dxhsum[f]);
    g.beta.data[f] = static_cast<Scalar>(dsum[f]);
  }
  TensorT<Scalar> dx = TensorT<Scalar>::zeros(x.shape);
  const double inv_m = 1.0 / static_cast<double>(m);
  bndetail::per_feature(x, f_count, [&](Index f, Index idx) {
    const double d = static_cast<double>(dy.data[idx]);
    const double h = static_cast<double>(aux.bn_xhat.data[idx]);
    const double v = static_cast<double>(st.gamma.data[f]) * aux.bn_inv[f] *
                     (d - dsum[f] * inv_m - h * dxhsum[f] * inv_m);
    dx.data[idx] = static_cast<Scalar>(v);
  });
  return dx;
}

}  // namespace noiselab
