#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "tensor.hpp"

// Differentiable operations over Tensor<S>. Conventions:
//  - 4-D activations are [N, C, H, W], flattened row-major.
//  - add/mul broadcast numpy-style (dims align right; 1 expands).
//  - Every op builds one graph node whose backprop accumulates (+=) into
//    the input grads, so shared inputs (e.g. network weights used by two
//    forward passes) collect contributions from all paths.

namespace hei::diff {

enum class Pad { Zero, Reflect };

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t D = std::max(a.size(), b.size());
  Shape out(D);
  for (std::size_t d = 0; d < D; ++d) {
    const Eigen::Index ad = d + a.size() >= D ? a[d + a.size() - D] : 1;
    const Eigen::Index bd = d + b.size() >= D ? b[d + b.size() - D] : 1;
    if (ad == bd) out[d] = ad;
    else if (ad == 1) out[d] = bd;
    else if (bd == 1) out[d] = ad;
    else
      throw ShapeError("broadcast: shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are incompatible");
  }
  return out;
}

// Per-output-dim stride into an input laid out with its own (padded) dims;
// stride 0 marks broadcast dims.
inline std::vector<Eigen::Index> broadcast_strides(const Shape& out, const Shape& in) {
  const std::size_t D = out.size();
  std::vector<Eigen::Index> st(D, 0);
  Eigen::Index run = 1;
  for (std::size_t r = 0; r < D; ++r) {
    const std::size_t d = D - 1 - r;
    const Eigen::Index id = d + in.size() >= D ? in[d + in.size() - D] : 1;
    st[d] = id == 1 ? 0 : run;
    run *= id;
  }
  return st;
}

// Odometer walk over the output index space, yielding flat offsets into
// both broadcast inputs.
template <class F>
void broadcast_walk(const Shape& out, const std::vector<Eigen::Index>& sa,
                    const std::vector<Eigen::Index>& sb, F&& f) {
  const std::size_t D = out.size();
  std::vector<Eigen::Index> idx(D, 0);
  Eigen::Index oa = 0, ob = 0;
  const Eigen::Index total = numel(out);
  for (Eigen::Index o = 0; o < total; ++o) {
    f(o, oa, ob);
    for (std::size_t r = 0; r < D; ++r) {
      const std::size_t d = D - 1 - r;
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      idx[d] = 0;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
    }
  }
}

inline void require_4d(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected a 4-D tensor, got " + shape_str(s));
}

inline Eigen::Index mod_index(Eigen::Index v, Eigen::Index m) { return ((v % m) + m) % m; }

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() == b.shape()) {
    Tensor<S> out = make_op<S>(a.shape(), {a, b}, [](TensorNode<S>& self) {
      for (int i = 0; i < 2; ++i) {
        auto& in = *self.inputs[i];
        if (!in.requires_grad) continue;
        in.ensure_grad();
        in.grad += self.grad;
      }
    });
    out.values() = a.values() + b.values();
    return out;
  }
  const Shape oshape = detail::broadcast_shape(a.shape(), b.shape());
  const auto sa = detail::broadcast_strides(oshape, a.shape());
  const auto sb = detail::broadcast_strides(oshape, b.shape());
  Tensor<S> out = make_op<S>(oshape, {a, b}, [oshape, sa, sb](TensorNode<S>& self) {
    auto& a = *self.inputs[0];
    auto& b = *self.inputs[1];
    if (a.requires_grad) a.ensure_grad();
    if (b.requires_grad) b.ensure_grad();
    detail::broadcast_walk(oshape, sa, sb, [&](Eigen::Index o, Eigen::Index oa, Eigen::Index ob) {
      if (a.requires_grad) a.grad[oa] += self.grad[o];
      if (b.requires_grad) b.grad[ob] += self.grad[o];
    });
  });
  auto& ov = out.values();
  detail::broadcast_walk(oshape, sa, sb,
                         [&, av = a.values().data(), bv = b.values().data()](
                             Eigen::Index o, Eigen::Index oa, Eigen::Index ob) {
                           ov[o] = av[oa] + bv[ob];
                         });
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() == b.shape()) {
    Tensor<S> out = make_op<S>(a.shape(), {a, b}, [](TensorNode<S>& self) {
      auto& a = *self.inputs[0];
      auto& b = *self.inputs[1];
      if (a.requires_grad) {
        a.ensure_grad();
        a.grad += self.grad * b.values;
      }
      if (b.requires_grad) {
        b.ensure_grad();
        b.grad += self.grad * a.values;
      }
    });
    out.values() = a.values() * b.values();
    return out;
  }
  const Shape oshape = detail::broadcast_shape(a.shape(), b.shape());
  const auto sa = detail::broadcast_strides(oshape, a.shape());
  const auto sb = detail::broadcast_strides(oshape, b.shape());
  Tensor<S> out = make_op<S>(oshape, {a, b}, [oshape, sa, sb](TensorNode<S>& self) {
    auto& a = *self.inputs[0];
    auto& b = *self.inputs[1];
    if (a.requires_grad) a.ensure_grad();
    if (b.requires_grad) b.ensure_grad();
    detail::broadcast_walk(oshape, sa, sb, [&](Eigen::Index o, Eigen::Index oa, Eigen::Index ob) {
      if (a.requires_grad) a.grad[oa] += self.grad[o] * b.values[ob];
      if (b.requires_grad) b.grad[ob] += self.grad[o] * a.values[oa];
    });
  });
  auto& ov = out.values();
  detail::broadcast_walk(oshape, sa, sb,
                         [&, av = a.values().data(), bv = b.values().data()](
                             Eigen::Index o, Eigen::Index oa, Eigen::Index ob) {
                           ov[o] = av[oa] * bv[ob];
                         });
  return out;
}

// Multiply by a compile-time-constant scalar (e.g. the loss weight alpha).
template <class S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  Tensor<S> out = make_op<S>(x.shape(), {x}, [c](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    x.grad += self.grad * c;
  });
  out.values() = x.values() * c;
  return out;
}

template <class S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope = S(0.1)) {
  Tensor<S> out = make_op<S>(x.shape(), {x}, [slope](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    x.grad += self.grad * (x.values > S(0)).select(VecX<S>::Ones(x.values.size()),
                                                   VecX<S>::Constant(x.values.size(), slope));
  });
  out.values() = (x.values() > S(0)).select(x.values(), x.values() * slope);
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return leaky_relu(x, S(0));
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> out = make_op<S>(x.shape(), {x}, [](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    x.grad += self.grad * self.values * (S(1) - self.values);
  });
  const auto& v = x.values();
  // split by sign so exp() never overflows
  out.values() = (v >= S(0)).select(S(1) / (S(1) + (-v).exp()), v.exp() / (S(1) + v.exp()));
  return out;
}

// Mean of squared differences over all entries.
template <class S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mse: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " must match");
  Tensor<S> out = make_op<S>(Shape{1}, {a, b}, [](TensorNode<S>& self) {
    auto& a = *self.inputs[0];
    auto& b = *self.inputs[1];
    const S c = self.grad[0] * S(2) / S(a.values.size());
    if (a.requires_grad) {
      a.ensure_grad();
      a.grad += c * (a.values - b.values);
    }
    if (b.requires_grad) {
      b.ensure_grad();
      b.grad -= c * (a.values - b.values);
    }
  });
  out.values()[0] = (a.values() - b.values()).square().mean();
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> out = make_op<S>(Shape{1}, {x}, [](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    x.grad += self.grad[0];
  });
  out.values()[0] = x.values().sum();
  return out;
}

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<S> out = make_op<S>(std::move(shape), {x}, [](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    x.grad += self.grad;
  });
  out.values() = x.values();
  return out;
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  detail::require_4d(x.shape(), "global_avg_pool");
  const Eigen::Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<S> out = make_op<S>(Shape{n, c, 1, 1}, {x}, [plane](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    for (Eigen::Index q = 0; q < self.values.size(); ++q)
      x.grad.segment(q * plane, plane) += self.grad[q] / S(plane);
  });
  for (Eigen::Index q = 0; q < n * c; ++q)
    out.values()[q] = x.values().segment(q * plane, plane).mean();
  return out;
}

template <class S>
Tensor<S> channel_mean(const Tensor<S>& x) {
  detail::require_4d(x.shape(), "channel_mean");
  const Eigen::Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<S> out = make_op<S>(Shape{n, 1, x.dim(2), x.dim(3)}, {x}, [n, c, plane](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    for (Eigen::Index in = 0; in < n; ++in)
      for (Eigen::Index ic = 0; ic < c; ++ic)
        x.grad.segment((in * c + ic) * plane, plane) += self.grad.segment(in * plane, plane) / S(c);
  });
  auto& ov = out.values();
  ov.setZero();
  for (Eigen::Index in = 0; in < n; ++in) {
    for (Eigen::Index ic = 0; ic < c; ++ic)
      ov.segment(in * plane, plane) += x.values().segment((in * c + ic) * plane, plane);
    ov.segment(in * plane, plane) /= S(c);
  }
  return out;
}

// Max over channels; ties resolve to the lowest channel index so the
// backward routing is deterministic.
template <class S>
Tensor<S> channel_max(const Tensor<S>& x) {
  detail::require_4d(x.shape(), "channel_max");
  const Eigen::Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(std::size_t(n * plane));
  Tensor<S> out =
      make_op<S>(Shape{n, 1, x.dim(2), x.dim(3)}, {x}, [n, c, plane, argmax](TensorNode<S>& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (Eigen::Index in = 0; in < n; ++in)
          for (Eigen::Index p = 0; p < plane; ++p) {
            const Eigen::Index ic = (*argmax)[std::size_t(in * plane + p)];
            x.grad[(in * c + ic) * plane + p] += self.grad[in * plane + p];
          }
      });
  auto& ov = out.values();
  for (Eigen::Index in = 0; in < n; ++in)
    for (Eigen::Index p = 0; p < plane; ++p) {
      S best = x.values()[(in * c + 0) * plane + p];
      Eigen::Index besti = 0;
      for (Eigen::Index ic = 1; ic < c; ++ic) {
        const S v = x.values()[(in * c + ic) * plane + p];
        if (v > best) {
          best = v;
          besti = ic;
        }
      }
      ov[in * plane + p] = best;
      (*argmax)[std::size_t(in * plane + p)] = besti;
    }
  return out;
}

// Factor-2 bilinear upsampling, half-pixel sampling with edge clamp
// (constant inputs stay constant; interior of a linear ramp stays linear).
template <class S>
Tensor<S> bilinear_upsample2x(const Tensor<S>& x) {
  detail::require_4d(x.shape(), "bilinear_upsample2x");
  const Eigen::Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Eigen::Index ho = 2 * h, wo = 2 * w;

  struct Tap {
    Eigen::Index lo, hi;
    S t;
  };
  auto taps = [](Eigen::Index size_in, Eigen::Index size_out) {
    std::vector<Tap> v(static_cast<std::size_t>(size_out));
    for (Eigen::Index o = 0; o < size_out; ++o) {
      const double src = (double(o) + 0.5) / 2.0 - 0.5;
      const double fl = std::floor(src);
      const auto i0 = static_cast<Eigen::Index>(fl);
      v[std::size_t(o)] = {std::clamp<Eigen::Index>(i0, 0, size_in - 1),
                           std::clamp<Eigen::Index>(i0 + 1, 0, size_in - 1),
                           static_cast<S>(src - fl)};
    }
    return v;
  };
  auto rows = std::make_shared<std::vector<Tap>>(taps(h, ho));
  auto cols = std::make_shared<std::vector<Tap>>(taps(w, wo));

  Tensor<S> out =
      make_op<S>(Shape{n, c, ho, wo}, {x}, [n, c, h, w, ho, wo, rows, cols](TensorNode<S>& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (Eigen::Index q = 0; q < n * c; ++q) {
          const S* g = self.grad.data() + q * ho * wo;
          S* gi = x.grad.data() + q * h * w;
          for (Eigen::Index oi = 0; oi < ho; ++oi) {
            const Tap& ri = (*rows)[std::size_t(oi)];
            for (Eigen::Index oj = 0; oj < wo; ++oj) {
              const Tap& cj = (*cols)[std::size_t(oj)];
              const S gv = g[oi * wo + oj];
              gi[ri.lo * w + cj.lo] += (S(1) - ri.t) * (S(1) - cj.t) * gv;
              gi[ri.lo * w + cj.hi] += (S(1) - ri.t) * cj.t * gv;
              gi[ri.hi * w + cj.lo] += ri.t * (S(1) - cj.t) * gv;
              gi[ri.hi * w + cj.hi] += ri.t * cj.t * gv;
            }
          }
        }
      });
  for (Eigen::Index q = 0; q < n * c; ++q) {
    const S* src = x.values().data() + q * h * w;
    S* dst = out.values().data() + q * ho * wo;
    for (Eigen::Index oi = 0; oi < ho; ++oi) {
      const Tap& ri = (*rows)[std::size_t(oi)];
      for (Eigen::Index oj = 0; oj < wo; ++oj) {
        const Tap& cj = (*cols)[std::size_t(oj)];
        dst[oi * wo + oj] = (S(1) - ri.t) * ((S(1) - cj.t) * src[ri.lo * w + cj.lo] +
                                             cj.t * src[ri.lo * w + cj.hi]) +
                            ri.t * ((S(1) - cj.t) * src[ri.hi * w + cj.lo] +
                                    cj.t * src[ri.hi * w + cj.hi]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear / convolution
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.shape().size() != 2 || weight.shape().size() != 2 || bias.shape().size() != 1)
    throw ShapeError("linear: expected x[N,Cin], weight[Cout,Cin], bias[Cout]");
  const Eigen::Index n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
  if (weight.dim(1) != cin || bias.dim(0) != cout)
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not fit input " + shape_str(x.shape()));

  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tensor<S> out = make_op<S>(Shape{n, cout}, {x, weight, bias}, [n, cin, cout](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    auto& w = *self.inputs[1];
    auto& b = *self.inputs[2];
    Eigen::Map<const RowMat> gmap(self.grad.data(), n, cout);
    Eigen::Map<const RowMat> xmap(x.values.data(), n, cin);
    Eigen::Map<const RowMat> wmap(w.values.data(), cout, cin);
    if (x.requires_grad) {
      x.ensure_grad();
      Eigen::Map<RowMat>(x.grad.data(), n, cin) += gmap * wmap;
    }
    if (w.requires_grad) {
      w.ensure_grad();
      Eigen::Map<RowMat>(w.grad.data(), cout, cin) += gmap.transpose() * xmap;
    }
    if (b.requires_grad) {
      b.ensure_grad();
      b.grad += gmap.colwise().sum().array().transpose();
    }
  });
  Eigen::Map<const RowMat> xmap(x.values().data(), n, cin);
  Eigen::Map<const RowMat> wmap(weight.values().data(), cout, cin);
  Eigen::Map<RowMat> omap(out.values().data(), n, cout);
  omap.noalias() = xmap * wmap.transpose();
  omap.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias.values().data(), cout);
  return out;
}

namespace detail {

// Source plane index for each padded coordinate, -1 meaning "zero". Reflect
// mirrors without repeating the edge sample and needs padding <= size-1.
inline std::vector<Eigen::Index> pad_plan(Eigen::Index h, Eigen::Index w, Eigen::Index p,
                                          Pad mode) {
  if (mode == Pad::Reflect && (p > h - 1 || p > w - 1))
    throw ShapeError("conv2d: reflect padding " + std::to_string(p) +
                     " needs spatial dims > padding");
  const Eigen::Index hp = h + 2 * p, wp = w + 2 * p;
  std::vector<Eigen::Index> plan(std::size_t(hp * wp));
  auto fold = [&](Eigen::Index i, Eigen::Index n) -> Eigen::Index {
    if (i >= 0 && i < n) return i;
    if (mode == Pad::Zero) return -1;
    return i < 0 ? -i : 2 * n - 2 - i;
  };
  for (Eigen::Index i = 0; i < hp; ++i) {
    const Eigen::Index si = fold(i - p, h);
    for (Eigen::Index j = 0; j < wp; ++j) {
      const Eigen::Index sj = fold(j - p, w);
      plan[std::size_t(i * wp + j)] = si < 0 || sj < 0 ? -1 : si * w + sj;
    }
  }
  return plan;
}

}  // namespace detail

// Per-channel normalization over the spatial plane with learnable scale
// and shift (batch-norm at batch size 1). Keeps activations unit-scale so
// the DIP-style learning rate does not drive the sigmoid head into
// saturation.
template <class S>
Tensor<S> channel_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                       S eps = S(1e-5)) {
  detail::require_4d(x.shape(), "channel_norm");
  const Eigen::Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw ShapeError("channel_norm: gamma/beta must be [C]");
  auto inv_std = std::make_shared<VecX<S>>(n * c);
  auto xhat = std::make_shared<VecX<S>>(x.size());
  Tensor<S> out =
      make_op<S>(x.shape(), {x, gamma, beta}, [n, c, plane, inv_std, xhat](TensorNode<S>& self) {
        auto& x = *self.inputs[0];
        auto& gm = *self.inputs[1];
        auto& bt = *self.inputs[2];
        if (x.requires_grad) x.ensure_grad();
        if (gm.requires_grad) gm.ensure_grad();
        if (bt.requires_grad) bt.ensure_grad();
        for (Eigen::Index q = 0; q < n * c; ++q) {
          const Eigen::Index ch = q % c;
          const auto g = self.grad.segment(q * plane, plane);
          const auto xh = xhat->segment(q * plane, plane);
          if (gm.requires_grad) gm.grad[ch] += (g * xh).sum();
          if (bt.requires_grad) bt.grad[ch] += g.sum();
          if (x.requires_grad) {
            const VecX<S> dxh = g * gm.values[ch];
            const S mean_dxh = dxh.mean();
            const S mean_dxh_xh = (dxh * xh).mean();
            x.grad.segment(q * plane, plane) +=
                (*inv_std)[q] * (dxh - mean_dxh - xh * mean_dxh_xh);
          }
        }
      });
  for (Eigen::Index q = 0; q < n * c; ++q) {
    const Eigen::Index ch = q % c;
    const auto seg = x.values().segment(q * plane, plane);
    const S mu = seg.mean();
    const S var = (seg - mu).square().mean();
    const S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[q] = is;
    xhat->segment(q * plane, plane) = (seg - mu) * is;
    out.values().segment(q * plane, plane) =
        gamma.values()[ch] * xhat->segment(q * plane, plane) + beta.values()[ch];
  }
  return out;
}

// Differentiable spatial padding with per-side widths. Zero padding
// contributes no gradient; reflect padding mirrors without repeating the
// edge and scatters gradients back through the mirror map.
template <class S>
Tensor<S> pad2d(const Tensor<S>& x, Eigen::Index top, Eigen::Index left, Eigen::Index bottom,
                Eigen::Index right, Pad mode = Pad::Zero) {
  detail::require_4d(x.shape(), "pad2d");
  if (top < 0 || left < 0 || bottom < 0 || right < 0) throw ShapeError("pad2d: negative padding");
  const Eigen::Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Eigen::Index hp = h + top + bottom, wp = w + left + right;
  if (mode == Pad::Reflect &&
      (top > h - 1 || bottom > h - 1 || left > w - 1 || right > w - 1))
    throw ShapeError("pad2d: reflect padding needs spatial dims > padding");
  auto fold = [&](Eigen::Index i, Eigen::Index size) -> Eigen::Index {
    if (i >= 0 && i < size) return i;
    if (mode == Pad::Zero) return -1;
    return i < 0 ? -i : 2 * size - 2 - i;
  };
  auto plan = std::make_shared<std::vector<Eigen::Index>>(std::size_t(hp * wp));
  for (Eigen::Index i = 0; i < hp; ++i) {
    const Eigen::Index si = fold(i - top, h);
    for (Eigen::Index j = 0; j < wp; ++j) {
      const Eigen::Index sj = fold(j - left, w);
      (*plan)[std::size_t(i * wp + j)] = si < 0 || sj < 0 ? -1 : si * w + sj;
    }
  }
  Tensor<S> out = make_op<S>(Shape{n, c, hp, wp}, {x}, [n, c, h, w, hp, wp, plan](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    for (Eigen::Index q = 0; q < n * c; ++q) {
      const S* g = self.grad.data() + q * hp * wp;
      S* gi = x.grad.data() + q * h * w;
      for (Eigen::Index p = 0; p < hp * wp; ++p) {
        const Eigen::Index src = (*plan)[std::size_t(p)];
        if (src >= 0) gi[src] += g[p];
      }
    }
  });
  for (Eigen::Index q = 0; q < n * c; ++q) {
    const S* src = x.values().data() + q * h * w;
    S* dst = out.values().data() + q * hp * wp;
    for (Eigen::Index p = 0; p < hp * wp; ++p) {
      const Eigen::Index s = (*plan)[std::size_t(p)];
      dst[p] = s >= 0 ? src[s] : S(0);
    }
  }
  return out;
}

// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,k,k], odd k, via im2col +
// GEMM. The patch matrices are kept for the backward pass.
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                 Eigen::Index stride = 1, Eigen::Index padding = 0, Pad pad_mode = Pad::Zero) {
  detail::require_4d(input.shape(), "conv2d");
  detail::require_4d(kernel.shape(), "conv2d kernel");
  const Eigen::Index n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Eigen::Index cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != cin || kernel.dim(3) != k)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not fit input " +
                     shape_str(input.shape()));
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (bias.shape().size() != 1 || bias.dim(0) != cout)
    throw ShapeError("conv2d: bias must be [Cout]");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: bad stride/padding");
  if (h + 2 * padding < k || w + 2 * padding < k ||
      (h + 2 * padding - k) % stride != 0 || (w + 2 * padding - k) % stride != 0)
    throw ShapeError("conv2d: output dims not integral for H,W=" + std::to_string(h) + "," +
                     std::to_string(w) + " k=" + std::to_string(k) + " stride=" +
                     std::to_string(stride) + " padding=" + std::to_string(padding));
  const Eigen::Index ho = (h + 2 * padding - k) / stride + 1;
  const Eigen::Index wo = (w + 2 * padding - k) / stride + 1;
  const Eigen::Index wp = w + 2 * padding;
  const Eigen::Index patch = cin * k * k;

  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;  // column-major
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto plan = std::make_shared<std::vector<Eigen::Index>>(detail::pad_plan(h, w, padding, pad_mode));
  auto cols_cache = std::make_shared<std::vector<Mat>>();
  cols_cache->reserve(std::size_t(n));

  Tensor<S> out = make_op<S>(
      Shape{n, cout, ho, wo}, {input, kernel, bias},
      [n, cin, h, w, cout, k, stride, ho, wo, wp, patch, plan, cols_cache](TensorNode<S>& self) {
        auto& in = *self.inputs[0];
        auto& ker = *self.inputs[1];
        auto& b = *self.inputs[2];
        Eigen::Map<const RowMat> kmap(ker.values.data(), cout, patch);
        if (in.requires_grad) in.ensure_grad();
        if (ker.requires_grad) ker.ensure_grad();
        if (b.requires_grad) b.ensure_grad();
        for (Eigen::Index bn = 0; bn < n; ++bn) {
          Eigen::Map<const Mat> gmap(self.grad.data() + bn * cout * ho * wo, ho * wo, cout);
          const Mat& cols = (*cols_cache)[std::size_t(bn)];
          if (b.requires_grad) b.grad += gmap.colwise().sum().array().transpose();
          if (ker.requires_grad)
            Eigen::Map<RowMat>(ker.grad.data(), cout, patch).noalias() += gmap.transpose() * cols;
          if (in.requires_grad) {
            const Mat dcols = gmap * kmap;  // (ho*wo) x patch
            S* gin = in.grad.data() + bn * cin * h * w;
            for (Eigen::Index c = 0; c < patch; ++c) {
              const Eigen::Index ci = c / (k * k), u = c / k % k, v = c % k;
              const S* dc = dcols.data() + c * ho * wo;
              for (Eigen::Index oi = 0; oi < ho; ++oi)
                for (Eigen::Index oj = 0; oj < wo; ++oj) {
                  const Eigen::Index src = (*plan)[std::size_t((oi * stride + u) * wp + oj * stride + v)];
                  if (src >= 0) gin[ci * h * w + src] += dc[oi * wo + oj];
                }
            }
          }
        }
      });

  Eigen::Map<const RowMat> kmap(kernel.values().data(), cout, patch);
  for (Eigen::Index bn = 0; bn < n; ++bn) {
    Mat cols(ho * wo, patch);
    const S* src = input.values().data() + bn * cin * h * w;
    for (Eigen::Index c = 0; c < patch; ++c) {
      const Eigen::Index ci = c / (k * k), u = c / k % k, v = c % k;
      S* dst = cols.data() + c * ho * wo;
      for (Eigen::Index oi = 0; oi < ho; ++oi)
        for (Eigen::Index oj = 0; oj < wo; ++oj) {
          const Eigen::Index s = (*plan)[std::size_t((oi * stride + u) * wp + oj * stride + v)];
          dst[oi * wo + oj] = s >= 0 ? src[ci * h * w + s] : S(0);
        }
    }
    Eigen::Map<Mat> omap(out.values().data() + bn * cout * ho * wo, ho * wo, cout);
    omap.noalias() = cols * kmap.transpose();
    for (Eigen::Index co = 0; co < cout; ++co) omap.col(co).array() += bias.values()[co];
    cols_cache->push_back(std::move(cols));
  }
  return out;
}

// ---------------------------------------------------------------------------
// structure ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_4d(a.shape(), "concat_channels");
  detail::require_4d(b.shape(), "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ outside the channel dim");
  const Eigen::Index n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor<S> out = make_op<S>(Shape{n, ca + cb, a.dim(2), a.dim(3)}, {a, b},
                             [n, ca, cb, plane](TensorNode<S>& self) {
                               auto& a = *self.inputs[0];
                               auto& b = *self.inputs[1];
                               for (Eigen::Index bn = 0; bn < n; ++bn) {
                                 const Eigen::Index base = bn * (ca + cb) * plane;
                                 if (a.requires_grad) {
                                   a.ensure_grad();
                                   a.grad.segment(bn * ca * plane, ca * plane) +=
                                       self.grad.segment(base, ca * plane);
                                 }
                                 if (b.requires_grad) {
                                   b.ensure_grad();
                                   b.grad.segment(bn * cb * plane, cb * plane) +=
                                       self.grad.segment(base + ca * plane, cb * plane);
                                 }
                               }
                             });
  for (Eigen::Index bn = 0; bn < n; ++bn) {
    const Eigen::Index base = bn * (ca + cb) * plane;
    out.values().segment(base, ca * plane) = a.values().segment(bn * ca * plane, ca * plane);
    out.values().segment(base + ca * plane, cb * plane) =
        b.values().segment(bn * cb * plane, cb * plane);
  }
  return out;
}

// Cyclic spatial shift of every channel plane; a pure (differentiable)
// permutation whose backward is the inverse shift.
template <class S>
Tensor<S> cyclic_shift(const Tensor<S>& x, Eigen::Index dx, Eigen::Index dy) {
  detail::require_4d(x.shape(), "cyclic_shift");
  const Eigen::Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto perm = std::make_shared<std::vector<Eigen::Index>>(std::size_t(h * w));
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < w; ++j)
      (*perm)[std::size_t(i * w + j)] =
          detail::mod_index(i - dy, h) * w + detail::mod_index(j - dx, w);
  const Eigen::Index plane = h * w;
  Tensor<S> out = make_op<S>(x.shape(), {x}, [n, c, plane, perm](TensorNode<S>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    for (Eigen::Index q = 0; q < n * c; ++q) {
      const S* g = self.grad.data() + q * plane;
      S* gi = x.grad.data() + q * plane;
      for (Eigen::Index p = 0; p < plane; ++p) gi[(*perm)[std::size_t(p)]] += g[p];
    }
  });
  for (Eigen::Index q = 0; q < n * c; ++q) {
    const S* src = x.values().data() + q * plane;
    S* dst = out.values().data() + q * plane;
    for (Eigen::Index p = 0; p < plane; ++p) dst[p] = src[(*perm)[std::size_t(p)]];
  }
  return out;
}

}  // namespace hei::diff
