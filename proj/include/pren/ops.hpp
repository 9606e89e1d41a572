#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "pren/gemm.hpp"
#include "pren/tape.hpp"
#include "pren/tensor.hpp"
#include "pren/types.hpp"

namespace pren::ops {

namespace detail {

// col[(c*kh*kw + ki*kw + kj), (oy*ow + ox)] for one image.
template <class S>
void im2col(const S* img, int channels, int h, int w, int kh, int kw,
            int stride, int pad, int oh, int ow, S* col) {
  for (int c = 0; c < channels; ++c) {
    const S* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        S* row = col + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) *
                           oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int y = oy * stride - pad + ki;
          for (int ox = 0; ox < ow; ++ox) {
            int x = ox * stride - pad + kj;
            row[oy * ow + ox] = (y >= 0 && y < h && x >= 0 && x < w)
                                    ? plane[y * w + x]
                                    : S(0);
          }
        }
      }
    }
  }
}

template <class S>
void col2im_add(const S* col, int channels, int h, int w, int kh, int kw,
                int stride, int pad, int oh, int ow, S* img) {
  for (int c = 0; c < channels; ++c) {
    S* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const S* row =
            col +
            (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int y = oy * stride - pad + ki;
          if (y < 0 || y >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int x = ox * stride - pad + kj;
            if (x >= 0 && x < w) plane[y * w + x] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class S>
int conv2d(Tape<S>& tape, int input, int weights, int bias, int stride,
           int pad) {
  const Tensor<S>& x = tape.value(input);
  const Tensor<S>& wt = tape.value(weights);
  const Tensor<S>& b = tape.value(bias);
  if (x.rank() != 4 || wt.rank() != 4)
    throw ShapeError("conv2d expects 4-d input and weights, got " +
                     shape_str(x.shape) + " and " + shape_str(wt.shape));
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int k = wt.dim(0), kh = wt.dim(2), kw = wt.dim(3);
  if (wt.dim(1) != c)
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape) +
                     " vs weights " + shape_str(wt.shape));
  if (b.size() != k)
    throw ShapeError("conv2d bias length " + std::to_string(b.size()) +
                     " != output channels " + std::to_string(k));
  if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d pad must be >= 0");
  if (kh > h + 2 * pad || kw > w + 2 * pad)
    throw ShapeError("conv2d kernel " + shape_str(wt.shape) +
                     " larger than padded input " + shape_str(x.shape));
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (w + 2 * pad - kw) / stride + 1;
  int ckk = c * kh * kw;

  Tensor<S> out({n, k, oh, ow});
  std::vector<S> col(static_cast<std::size_t>(ckk) * oh * ow);
  for (int i = 0; i < n; ++i) {
    detail::im2col(x.data.data() + static_cast<std::size_t>(i) * c * h * w, c,
                   h, w, kh, kw, stride, pad, oh, ow, col.data());
    S* y = out.data.data() + static_cast<std::size_t>(i) * k * oh * ow;
    gemm(false, false, k, oh * ow, ckk, S(1), wt.data.data(), ckk, col.data(),
         oh * ow, S(0), y, oh * ow);
    for (int kk = 0; kk < k; ++kk) {
      S bv = b.data[static_cast<std::size_t>(kk)];
      S* plane = y + static_cast<std::size_t>(kk) * oh * ow;
      for (int p = 0; p < oh * ow; ++p) plane[p] += bv;
    }
  }

  auto back = [input, weights, bias, n, c, h, w, k, kh, kw, stride, pad, oh,
               ow, ckk](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    const Tensor<S>& xv = t.value(input);
    const Tensor<S>& wv = t.value(weights);
    std::vector<S>& dx = t.grad(input);
    std::vector<S>& dw = t.grad(weights);
    std::vector<S>& db = t.grad(bias);
    std::vector<S> col(static_cast<std::size_t>(ckk) * oh * ow);
    std::vector<S> dcol(col.size());
    for (int i = 0; i < n; ++i) {
      const S* dyi = dy.data() + static_cast<std::size_t>(i) * k * oh * ow;
      // dX via W^T * dY, scattered back through the column layout.
      gemm(true, false, ckk, oh * ow, k, S(1), wv.data.data(), ckk, dyi,
           oh * ow, S(0), dcol.data(), oh * ow);
      detail::col2im_add(dcol.data(), c, h, w, kh, kw, stride, pad, oh, ow,
                         dx.data() + static_cast<std::size_t>(i) * c * h * w);
      // dW += dY * col^T.
      detail::im2col(xv.data.data() + static_cast<std::size_t>(i) * c * h * w,
                     c, h, w, kh, kw, stride, pad, oh, ow, col.data());
      gemm(false, true, k, ckk, oh * ow, S(1), dyi, oh * ow, col.data(),
           oh * ow, S(1), dw.data(), ckk);
      for (int kk = 0; kk < k; ++kk) {
        const S* plane = dyi + static_cast<std::size_t>(kk) * oh * ow;
        S acc = S(0);
        for (int p = 0; p < oh * ow; ++p) acc += plane[p];
        db[static_cast<std::size_t>(kk)] += acc;
      }
    }
  };
  return tape.push(std::move(out), {input, weights, bias}, back, "conv2d");
}

template <class S>
int maxpool2d(Tape<S>& tape, int input, int window, int stride) {
  const Tensor<S>& x = tape.value(input);
  if (x.rank() != 4)
    throw ShapeError("maxpool2d expects 4-d input, got " + shape_str(x.shape));
  if (window < 1 || stride < 1)
    throw std::invalid_argument("maxpool2d window and stride must be >= 1");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window > h || window > w)
    throw ShapeError("maxpool2d window " + std::to_string(window) +
                     " exceeds spatial extents of " + shape_str(x.shape));
  int oh = (h - window) / stride + 1;
  int ow = (w - window) / stride + 1;

  Tensor<S> out({n, c, oh, ow});
  // Flat source index of each window maximum; first maximum in row-major
  // scan order wins ties.
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out.size()));
  std::size_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int cc = 0; cc < c; ++cc) {
      const S* plane =
          x.data.data() + (static_cast<std::size_t>(i) * c + cc) * h * w;
      std::int64_t base = (static_cast<std::int64_t>(i) * c + cc) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          S best = plane[oy * stride * w + ox * stride];
          std::int64_t best_idx = base + oy * stride * w + ox * stride;
          for (int ki = 0; ki < window; ++ki) {
            for (int kj = 0; kj < window; ++kj) {
              int y = oy * stride + ki, xx = ox * stride + kj;
              S v = plane[y * w + xx];
              if (v > best) {
                best = v;
                best_idx = base + y * w + xx;
              }
            }
          }
          out.data[oi] = best;
          (*argmax)[oi] = best_idx;
        }
      }
    }
  }

  auto back = [input, argmax](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    std::vector<S>& dx = t.grad(input);
    for (std::size_t i = 0; i < dy.size(); ++i)
      dx[static_cast<std::size_t>((*argmax)[i])] += dy[i];
  };
  return tape.push(std::move(out), {input}, back, "maxpool2d");
}

template <class S>
int relu(Tape<S>& tape, int input) {
  const Tensor<S>& x = tape.value(input);
  Tensor<S> out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    out.data[i] = x.data[i] > S(0) ? x.data[i] : S(0);
  auto back = [input](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    const Tensor<S>& xv = t.value(input);
    std::vector<S>& dx = t.grad(input);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv.data[i] > S(0)) dx[i] += dy[i];
  };
  return tape.push(std::move(out), {input}, back, "relu");
}

template <class S>
int linear(Tape<S>& tape, int input, int weights, int bias) {
  const Tensor<S>& x = tape.value(input);
  const Tensor<S>& wt = tape.value(weights);
  const Tensor<S>& b = tape.value(bias);
  if (x.rank() != 2 || wt.rank() != 2)
    throw ShapeError("linear expects 2-d input and weights, got " +
                     shape_str(x.shape) + " and " + shape_str(wt.shape));
  int n = x.dim(0), d = x.dim(1), e = wt.dim(1);
  if (wt.dim(0) != d)
    throw ShapeError("linear dimension mismatch: input " + shape_str(x.shape) +
                     " vs weights " + shape_str(wt.shape));
  if (b.size() != e)
    throw ShapeError("linear bias length " + std::to_string(b.size()) +
                     " != output dim " + std::to_string(e));

  Tensor<S> out({n, e});
  gemm(false, false, n, e, d, S(1), x.data.data(), d, wt.data.data(), e, S(0),
       out.data.data(), e);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < e; ++j)
      out.data[static_cast<std::size_t>(i) * e + j] +=
          b.data[static_cast<std::size_t>(j)];

  auto back = [input, weights, bias, n, d, e](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    const Tensor<S>& xv = t.value(input);
    const Tensor<S>& wv = t.value(weights);
    std::vector<S>& dx = t.grad(input);
    std::vector<S>& dw = t.grad(weights);
    std::vector<S>& db = t.grad(bias);
    gemm(false, true, n, d, e, S(1), dy.data(), e, wv.data.data(), e, S(1),
         dx.data(), d);
    gemm(true, false, d, e, n, S(1), xv.data.data(), d, dy.data(), e, S(1),
         dw.data(), e);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < e; ++j)
        db[static_cast<std::size_t>(j)] += dy[static_cast<std::size_t>(i) * e + j];
  };
  return tape.push(std::move(out), {input, weights, bias}, back, "linear");
}

// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is a
// pure identity. The mask is a deterministic function of `seed`.
template <class S>
int dropout(Tape<S>& tape, int input, double rate, bool training,
            std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1), got " +
                                std::to_string(rate));
  const Tensor<S>& x = tape.value(input);
  if (!training || rate == 0.0) {
    Tensor<S> out = x;
    auto back = [input](Tape<S>& t, int self) {
      const std::vector<S>& dy = t.grad(self);
      std::vector<S>& dx = t.grad(input);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    };
    return tape.push(std::move(out), {input}, back, "dropout");
  }

  auto mask = std::make_shared<std::vector<std::uint8_t>>(x.data.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  Tensor<S> out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    bool keep = uni(rng) >= rate;
    (*mask)[i] = keep;
    out.data[i] = keep ? x.data[i] * scale : S(0);
  }
  auto back = [input, mask, scale](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    std::vector<S>& dx = t.grad(input);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if ((*mask)[i]) dx[i] += dy[i] * scale;
  };
  return tape.push(std::move(out), {input}, back, "dropout");
}

template <class S>
int concat(Tape<S>& tape, const std::vector<int>& inputs, int axis) {
  if (inputs.empty()) throw std::invalid_argument("concat needs >= 1 input");
  const Tensor<S>& first = tape.value(inputs[0]);
  int rank = first.rank();
  if (axis < 0 || axis >= rank)
    throw std::invalid_argument("concat axis " + std::to_string(axis) +
                                " out of range for rank " +
                                std::to_string(rank));
  std::vector<int> out_shape = first.shape;
  int total_axis = 0;
  for (int id : inputs) {
    const Tensor<S>& t = tape.value(id);
    if (t.rank() != rank)
      throw ShapeError("concat rank mismatch: " + shape_str(first.shape) +
                       " vs " + shape_str(t.shape));
    for (int a = 0; a < rank; ++a)
      if (a != axis && t.dim(a) != first.dim(a))
        throw ShapeError("concat extent mismatch on axis " +
                         std::to_string(a) + ": " + shape_str(first.shape) +
                         " vs " + shape_str(t.shape));
    total_axis += t.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total_axis;

  std::int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= first.dim(a);
  for (int a = axis + 1; a < rank; ++a) inner *= first.dim(a);

  Tensor<S> out(out_shape);
  std::int64_t offset = 0;
  for (int id : inputs) {
    const Tensor<S>& t = tape.value(id);
    std::int64_t block = t.dim(axis) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(t.data.data() + o * block, block,
                  out.data.data() + o * total_axis * inner + offset * inner);
    offset += t.dim(axis);
  }

  auto back = [inputs, axis, outer, inner, total_axis](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    std::int64_t offset = 0;
    for (int id : inputs) {
      const Tensor<S>& v = t.value(id);
      std::vector<S>& dx = t.grad(id);
      std::int64_t block = v.dim(axis) * inner;
      for (std::int64_t o = 0; o < outer; ++o) {
        const S* src = dy.data() + o * total_axis * inner + offset * inner;
        S* dst = dx.data() + o * block;
        for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
      }
      offset += v.dim(axis);
    }
  };
  return tape.push(std::move(out), inputs, back, "concat");
}

template <class S>
int residual_add(Tape<S>& tape, int a, int b) {
  const Tensor<S>& av = tape.value(a);
  const Tensor<S>& bv = tape.value(b);
  if (av.shape != bv.shape)
    throw ShapeError("residual_add shape mismatch: " + shape_str(av.shape) +
                     " vs " + shape_str(bv.shape));
  Tensor<S> out(av.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[i] + bv.data[i];
  auto back = [a, b](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    std::vector<S>& da = t.grad(a);
    std::vector<S>& db = t.grad(b);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      da[i] += dy[i];
      db[i] += dy[i];
    }
  };
  return tape.push(std::move(out), {a, b}, back, "residual_add");
}

// Crops one window per batch element (windows.size() == N), or the same
// window for all elements (windows.size() == 1). Backward scatter-adds, so
// overlapping crops of the same source accumulate.
template <class S>
int region_crop(Tape<S>& tape, int input,
                const std::vector<RegionWindow>& windows) {
  const Tensor<S>& x = tape.value(input);
  if (x.rank() != 4)
    throw ShapeError("region_crop expects 4-d features, got " +
                     shape_str(x.shape));
  int n = x.dim(0), c = x.dim(1), hf = x.dim(2), wf = x.dim(3);
  if (windows.empty() ||
      (windows.size() != 1 && windows.size() != static_cast<std::size_t>(n)))
    throw std::invalid_argument("region_crop needs 1 or N windows, got " +
                                std::to_string(windows.size()));
  int rw = windows[0].w, rh = windows[0].h;
  for (const RegionWindow& win : windows) {
    if (win.w != rw || win.h != rh)
      throw std::invalid_argument("region_crop windows must share extents");
    if (win.bu < 0 || win.bv < 0 || win.bu + win.w > wf ||
        win.bv + win.h > hf || win.w < 1 || win.h < 1)
      throw std::out_of_range(
          "region_crop window (" + std::to_string(win.bu) + "," +
          std::to_string(win.bv) + "," + std::to_string(win.w) + "," +
          std::to_string(win.h) + ") outside feature map " +
          shape_str(x.shape));
  }

  auto win_of = [&windows](int i) -> const RegionWindow& {
    return windows.size() == 1 ? windows[0]
                               : windows[static_cast<std::size_t>(i)];
  };

  Tensor<S> out({n, c, rh, rw});
  for (int i = 0; i < n; ++i) {
    const RegionWindow& win = win_of(i);
    for (int cc = 0; cc < c; ++cc) {
      const S* src =
          x.data.data() + (static_cast<std::size_t>(i) * c + cc) * hf * wf;
      S* dst =
          out.data.data() + (static_cast<std::size_t>(i) * c + cc) * rh * rw;
      for (int y = 0; y < rh; ++y)
        std::copy_n(src + (win.bv + y) * wf + win.bu, rw, dst + y * rw);
    }
  }

  auto wins = std::make_shared<std::vector<RegionWindow>>(windows);
  auto back = [input, wins, n, c, hf, wf, rh, rw](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    std::vector<S>& dx = t.grad(input);
    for (int i = 0; i < n; ++i) {
      const RegionWindow& win =
          wins->size() == 1 ? (*wins)[0] : (*wins)[static_cast<std::size_t>(i)];
      for (int cc = 0; cc < c; ++cc) {
        S* dst = dx.data() + (static_cast<std::size_t>(i) * c + cc) * hf * wf;
        const S* src =
            dy.data() + (static_cast<std::size_t>(i) * c + cc) * rh * rw;
        for (int y = 0; y < rh; ++y)
          for (int x2 = 0; x2 < rw; ++x2)
            dst[(win.bv + y) * wf + win.bu + x2] += src[y * rw + x2];
      }
    }
  };
  return tape.push(std::move(out), {input}, back, "region_crop");
}

template <class S>
int region_crop(Tape<S>& tape, int input, const RegionWindow& window) {
  return region_crop(tape, input, std::vector<RegionWindow>{window});
}

template <class S>
int reshape(Tape<S>& tape, int input, std::vector<int> new_shape) {
  const Tensor<S>& x = tape.value(input);
  if (shape_size(new_shape) != x.size())
    throw ShapeError("reshape from " + shape_str(x.shape) + " to " +
                     shape_str(new_shape) + " changes element count");
  Tensor<S> out(std::move(new_shape), x.data);
  auto back = [input](Tape<S>& t, int self) {
    const std::vector<S>& dy = t.grad(self);
    std::vector<S>& dx = t.grad(input);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  };
  return tape.push(std::move(out), {input}, back, "reshape");
}

// Mean-reduced smooth L1: f(x) = 0.5 x^2/beta for |x| < beta, |x| - beta/2
// otherwise, with x = pred - target.
template <class S>
int smooth_l1_loss(Tape<S>& tape, int pred, int target, double beta) {
  const Tensor<S>& p = tape.value(pred);
  const Tensor<S>& g = tape.value(target);
  if (p.shape != g.shape)
    throw ShapeError("smooth_l1_loss shape mismatch: " + shape_str(p.shape) +
                     " vs " + shape_str(g.shape));
  if (beta <= 0.0)
    throw std::invalid_argument("smooth_l1_loss beta must be > 0");

  const double count = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    double x = static_cast<double>(p.data[i]) - static_cast<double>(g.data[i]);
    double ax = std::abs(x);
    acc += ax < beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
  }
  Tensor<S> out({1});
  out.data[0] = static_cast<S>(acc / count);

  auto back = [pred, target, beta, count](Tape<S>& t, int self) {
    const S up = t.grad(self)[0];
    const Tensor<S>& pv = t.value(pred);
    const Tensor<S>& gv = t.value(target);
    std::vector<S>& dp = t.grad(pred);
    std::vector<S>& dg = t.grad(target);
    for (std::size_t i = 0; i < pv.data.size(); ++i) {
      double x =
          static_cast<double>(pv.data[i]) - static_cast<double>(gv.data[i]);
      double d = std::clamp(x / beta, -1.0, 1.0) / count;
      dp[i] += up * static_cast<S>(d);
      dg[i] -= up * static_cast<S>(d);
    }
  };
  return tape.push(std::move(out), {pred, target}, back, "smooth_l1_loss");
}

// Scalar projection sum(w[i] * x[i]); used by the gradient-check harness to
// turn an arbitrary op output into a scalar objective.
template <class S>
int weighted_sum(Tape<S>& tape, int input, std::vector<S> w) {
  const Tensor<S>& x = tape.value(input);
  if (static_cast<std::int64_t>(w.size()) != x.size())
    throw ShapeError("weighted_sum weight count " + std::to_string(w.size()) +
                     " != input size " + std::to_string(x.size()));
  Tensor<S> out({1});
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i)
    acc += static_cast<double>(w[i]) * static_cast<double>(x.data[i]);
  out.data[0] = static_cast<S>(acc);
  auto wp = std::make_shared<std::vector<S>>(std::move(w));
  auto back = [input, wp](Tape<S>& t, int self) {
    const S up = t.grad(self)[0];
    std::vector<S>& dx = t.grad(input);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += up * (*wp)[i];
  };
  return tape.push(std::move(out), {input}, back, "weighted_sum");
}

}  // namespace pren::ops
