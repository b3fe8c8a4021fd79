#pragma once

#include "volrig/parallel.hpp"
#include "volrig/random.hpp"
#include "volrig/tensor.hpp"

#include <cstdint>

namespace volrig::nn {

namespace detail {

struct ConvGeometry {
  int d, h, w, cin;     // input
  int k, stride, pad;   // kernel, stride, leading pad
  int od, oh, ow, cout; // output
};

/// "Same"-style padding: output = ceil(size / stride), extra padding goes after.
inline ConvGeometry conv_geometry(const Shape& in, const Shape& weight, int stride) {
  if (in.size() != 4) throw ShapeError("conv3d input must be [D,H,W,C], got " + shape_str(in));
  if (weight.size() != 5 || weight[0] != weight[1] || weight[1] != weight[2])
    throw ShapeError("conv3d weight must be [k,k,k,Cin,Cout], got " + shape_str(weight));
  if (weight[3] != in[3])
    throw ShapeError("conv3d channel mismatch: input " + shape_str(in) + " weight " + shape_str(weight));
  if (stride != 1 && stride != 2) throw ShapeError("conv3d stride must be 1 or 2");
  if (stride == 2 && (in[0] % 2 || in[1] % 2 || in[2] % 2))
    throw ShapeError("stride-2 conv3d needs even spatial dims, got " + shape_str(in));
  ConvGeometry g{in[0], in[1], in[2], in[3], weight[0], stride, 0, 0, 0, 0, weight[4]};
  g.od = (g.d + stride - 1) / stride;
  g.oh = (g.h + stride - 1) / stride;
  g.ow = (g.w + stride - 1) / stride;
  // Cubic inputs in this library; the leading pad is computed from depth.
  const int total = std::max((g.od - 1) * stride + g.k - g.d, 0);
  g.pad = total / 2;
  return g;
}

/// Output x range [lo, hi) for which the input column xo*s + kx - pad is inside [0, w).
inline std::pair<int, int> valid_range(int out, int in, int kx, int s, int pad) {
  int lo = 0;
  while (lo < out && lo * s + kx - pad < 0) ++lo;
  int hi = out;
  while (hi > lo && (hi - 1) * s + kx - pad >= in) --hi;
  return {lo, hi};
}

template <class T>
std::vector<T> transpose_io(std::span<const T> w, int taps, int cin, int cout) {
  std::vector<T> wt(w.size());
  for (int t = 0; t < taps; ++t)
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co)
        wt[(static_cast<std::size_t>(t) * cout + co) * cin + ci] = w[(static_cast<std::size_t>(t) * cin + ci) * cout + co];
  return wt;
}

}  // namespace detail

/// 3D cross-correlation. input [D,H,W,Cin], weight [k,k,k,Cin,Cout], bias [Cout].
template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      int stride = 1) {
  const auto g = detail::conv_geometry(input.shape(), weight.shape(), stride);
  if (bias.size() != static_cast<std::size_t>(g.cout)) throw ShapeError("conv3d bias size mismatch");
  const int k = g.k, s = g.stride, pad = g.pad, cin = g.cin, cout = g.cout;
  std::vector<T> out(static_cast<std::size_t>(g.od) * g.oh * g.ow * cout);
  const T* in = input.values().data();
  const T* w = weight.values().data();
  const T* b = bias.values().data();

  parallel_for(static_cast<std::size_t>(g.od), [&](std::size_t zo_) {
    const int zo = static_cast<int>(zo_);
    for (int yo = 0; yo < g.oh; ++yo) {
      T* orow = out.data() + (static_cast<std::size_t>(zo) * g.oh + yo) * g.ow * cout;
      for (int xo = 0; xo < g.ow; ++xo) std::copy(b, b + cout, orow + static_cast<std::size_t>(xo) * cout);
      for (int kz = 0; kz < k; ++kz) {
        const int zi = zo * s + kz - pad;
        if (zi < 0 || zi >= g.d) continue;
        for (int ky = 0; ky < k; ++ky) {
          const int yi = yo * s + ky - pad;
          if (yi < 0 || yi >= g.h) continue;
          const T* irow = in + (static_cast<std::size_t>(zi) * g.h + yi) * g.w * cin;
          for (int kx = 0; kx < k; ++kx) {
            const T* wk = w + static_cast<std::size_t>((kz * k + ky) * k + kx) * cin * cout;
            const auto [lo, hi] = detail::valid_range(g.ow, g.w, kx, s, pad);
            for (int xo = lo; xo < hi; ++xo) {
              const T* ip = irow + static_cast<std::size_t>(xo * s + kx - pad) * cin;
              T* op = orow + static_cast<std::size_t>(xo) * cout;
              for (int ci = 0; ci < cin; ++ci) {
                const T a = ip[ci];
                const T* wr = wk + static_cast<std::size_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) op[co] += a * wr[co];
              }
            }
          }
        }
      }
    }
  });

  auto in_node = input.node(), w_node = weight.node(), b_node = bias.node();
  return make_result<T>(
      "conv3d", {g.od, g.oh, g.ow, cout}, std::move(out), {in_node, w_node, b_node},
      [g, in_node, w_node, b_node](Node<T>& self) {
        const int k = g.k, s = g.stride, pad = g.pad, cin = g.cin, cout = g.cout;
        const T* gout = self.grad.data();
        const T* in = in_node->value.data();
        if (in_node->requires_grad) {
          const auto wt = detail::transpose_io<T>(w_node->value, k * k * k, cin, cout);
          T* gin = in_node->grad.data();
          parallel_for(static_cast<std::size_t>(g.d), [&](std::size_t zi_) {
            const int zi = static_cast<int>(zi_);
            for (int kz = 0; kz < k; ++kz) {
              const int zn = zi + pad - kz;
              if (zn < 0 || zn % s) continue;
              const int zo = zn / s;
              if (zo >= g.od) continue;
              for (int yi = 0; yi < g.h; ++yi) {
                for (int ky = 0; ky < k; ++ky) {
                  const int yn = yi + pad - ky;
                  if (yn < 0 || yn % s) continue;
                  const int yo = yn / s;
                  if (yo >= g.oh) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const T* wk = wt.data() + static_cast<std::size_t>((kz * k + ky) * k + kx) * cin * cout;
                    for (int xi = 0; xi < g.w; ++xi) {
                      const int xn = xi + pad - kx;
                      if (xn < 0 || xn % s) continue;
                      const int xo = xn / s;
                      if (xo >= g.ow) continue;
                      const T* gp = gout + ((static_cast<std::size_t>(zo) * g.oh + yo) * g.ow + xo) * cout;
                      T* gi = gin + ((static_cast<std::size_t>(zi) * g.h + yi) * g.w + xi) * cin;
                      for (int co = 0; co < cout; ++co) {
                        const T gv = gp[co];
                        const T* wr = wk + static_cast<std::size_t>(co) * cin;
                        for (int ci = 0; ci < cin; ++ci) gi[ci] += gv * wr[ci];
                      }
                    }
                  }
                }
              }
            }
          });
        }
        if (w_node->requires_grad) {
          const std::size_t wsize = w_node->value.size();
          std::vector<T> partial(static_cast<std::size_t>(g.od) * wsize, T(0));
          parallel_for(static_cast<std::size_t>(g.od), [&](std::size_t zo_) {
            const int zo = static_cast<int>(zo_);
            T* gw = partial.data() + zo_ * wsize;
            for (int kz = 0; kz < k; ++kz) {
              const int zi = zo * s + kz - pad;
              if (zi < 0 || zi >= g.d) continue;
              for (int yo = 0; yo < g.oh; ++yo)
                for (int ky = 0; ky < k; ++ky) {
                  const int yi = yo * s + ky - pad;
                  if (yi < 0 || yi >= g.h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    T* gwk = gw + static_cast<std::size_t>((kz * k + ky) * k + kx) * cin * cout;
                    const auto [lo, hi] = detail::valid_range(g.ow, g.w, kx, s, pad);
                    for (int xo = lo; xo < hi; ++xo) {
                      const T* ip = in + ((static_cast<std::size_t>(zi) * g.h + yi) * g.w + (xo * s + kx - pad)) * cin;
                      const T* gp = gout + ((static_cast<std::size_t>(zo) * g.oh + yo) * g.ow + xo) * cout;
                      for (int ci = 0; ci < cin; ++ci) {
                        const T a = ip[ci];
                        T* gr = gwk + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) gr[co] += a * gp[co];
                      }
                    }
                  }
                }
            }
          });
          T* gw = w_node->grad.data();
          for (int zo = 0; zo < g.od; ++zo) {
            const T* p = partial.data() + static_cast<std::size_t>(zo) * wsize;
            for (std::size_t i = 0; i < wsize; ++i) gw[i] += p[i];
          }
        }
        if (b_node->requires_grad) {
          T* gb = b_node->grad.data();
          const std::size_t n = self.grad.size() / static_cast<std::size_t>(cout);
          for (std::size_t v = 0; v < n; ++v)
            for (int co = 0; co < cout; ++co) gb[co] += gout[v * cout + co];
        }
      });
}

/// Transposed convolution with 2x2x2 kernel and stride 2: spatial dims double.
/// weight [2,2,2,Cin,Cout].
template <class T>
BasicTensor<T> conv_transpose3d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 4) throw ShapeError("conv_transpose3d input must be [D,H,W,C], got " + shape_str(is));
  if (ws.size() != 5 || ws[0] != 2 || ws[1] != 2 || ws[2] != 2)
    throw ShapeError("conv_transpose3d weight must be [2,2,2,Cin,Cout], got " + shape_str(ws));
  if (ws[3] != is[3]) throw ShapeError("conv_transpose3d channel mismatch");
  const int d = is[0], h = is[1], w = is[2], cin = is[3], cout = ws[4];
  if (bias.size() != static_cast<std::size_t>(cout)) throw ShapeError("conv_transpose3d bias size mismatch");
  const int od = 2 * d, oh = 2 * h, ow = 2 * w;
  std::vector<T> out(static_cast<std::size_t>(od) * oh * ow * cout);
  const T* in = input.values().data();
  const T* wv = weight.values().data();
  const T* b = bias.values().data();
  auto oidx = [=](int z, int y, int x) { return ((static_cast<std::size_t>(z) * oh + y) * ow + x) * cout; };
  auto iidx = [=](int z, int y, int x) { return ((static_cast<std::size_t>(z) * h + y) * w + x) * cin; };

  parallel_for(static_cast<std::size_t>(d), [&](std::size_t z_) {
    const int z = static_cast<int>(z_);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T* ip = in + iidx(z, y, x);
        for (int t = 0; t < 8; ++t) {
          const int a = t >> 2, bb = (t >> 1) & 1, c = t & 1;
          T* op = out.data() + oidx(2 * z + a, 2 * y + bb, 2 * x + c);
          std::copy(b, b + cout, op);
          const T* wk = wv + static_cast<std::size_t>(t) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const T v = ip[ci];
            const T* wr = wk + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) op[co] += v * wr[co];
          }
        }
      }
  });

  auto in_node = input.node(), w_node = weight.node(), b_node = bias.node();
  return make_result<T>(
      "conv_transpose3d", {od, oh, ow, cout}, std::move(out), {in_node, w_node, b_node},
      [=](Node<T>& self) {
        const T* gout = self.grad.data();
        if (in_node->requires_grad) {
          const auto wt = detail::transpose_io<T>(w_node->value, 8, cin, cout);
          T* gin = in_node->grad.data();
          parallel_for(static_cast<std::size_t>(d), [&](std::size_t z_) {
            const int z = static_cast<int>(z_);
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) {
                T* gi = gin + iidx(z, y, x);
                for (int t = 0; t < 8; ++t) {
                  const T* gp = gout + oidx(2 * z + (t >> 2), 2 * y + ((t >> 1) & 1), 2 * x + (t & 1));
                  const T* wk = wt.data() + static_cast<std::size_t>(t) * cin * cout;
                  for (int co = 0; co < cout; ++co) {
                    const T gv = gp[co];
                    const T* wr = wk + static_cast<std::size_t>(co) * cin;
                    for (int ci = 0; ci < cin; ++ci) gi[ci] += gv * wr[ci];
                  }
                }
              }
          });
        }
        if (w_node->requires_grad) {
          const std::size_t wsize = w_node->value.size();
          const T* in = in_node->value.data();
          std::vector<T> partial(static_cast<std::size_t>(d) * wsize, T(0));
          parallel_for(static_cast<std::size_t>(d), [&](std::size_t z_) {
            const int z = static_cast<int>(z_);
            T* gw = partial.data() + z_ * wsize;
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) {
                const T* ip = in + iidx(z, y, x);
                for (int t = 0; t < 8; ++t) {
                  const T* gp = gout + oidx(2 * z + (t >> 2), 2 * y + ((t >> 1) & 1), 2 * x + (t & 1));
                  T* gwk = gw + static_cast<std::size_t>(t) * cin * cout;
                  for (int ci = 0; ci < cin; ++ci) {
                    const T a = ip[ci];
                    T* gr = gwk + static_cast<std::size_t>(ci) * cout;
                    for (int co = 0; co < cout; ++co) gr[co] += a * gp[co];
                  }
                }
              }
          });
          T* gw = w_node->grad.data();
          for (int z = 0; z < d; ++z) {
            const T* p = partial.data() + static_cast<std::size_t>(z) * wsize;
            for (std::size_t i = 0; i < wsize; ++i) gw[i] += p[i];
          }
        }
        if (b_node->requires_grad) {
          T* gb = b_node->grad.data();
          const std::size_t n = self.grad.size() / static_cast<std::size_t>(cout);
          for (std::size_t v = 0; v < n; ++v)
            for (int co = 0; co < cout; ++co) gb[co] += gout[v * cout + co];
        }
      });
}

enum class Mode { Train, Eval };

/// Per-channel running statistics of a batch-norm layer.
template <class T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(BasicTensor<T>::zeros({channels})), running_var(BasicTensor<T>::full({channels}, T(1))) {}
};

/// Normalizes each channel over all spatial positions. Train mode uses batch
/// statistics and updates the running estimates.
template <class T>
BasicTensor<T> batchnorm3d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                           BatchNormState<T>& state, Mode mode, double momentum = 0.1, double eps = 1e-5) {
  const int c = input.dim(-1);
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c) ||
      state.running_mean.size() != static_cast<std::size_t>(c))
    throw ShapeError("batchnorm3d parameter size mismatch for " + shape_str(input.shape()));
  const std::size_t n = input.size() / static_cast<std::size_t>(c);
  const T* x = input.values().data();
  std::vector<double> mean(c, 0.0), invstd(c, 0.0);
  if (mode == Mode::Train) {
    std::vector<double> var(c, 0.0);
    for (std::size_t v = 0; v < n; ++v)
      for (int ch = 0; ch < c; ++ch) mean[ch] += x[v * c + ch];
    for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(n);
    for (std::size_t v = 0; v < n; ++v)
      for (int ch = 0; ch < c; ++ch) {
        const double dlt = x[v * c + ch] - mean[ch];
        var[ch] += dlt * dlt;
      }
    auto rm = state.running_mean.mutable_values();
    auto rv = state.running_var.mutable_values();
    for (int ch = 0; ch < c; ++ch) {
      const double biased = var[ch] / static_cast<double>(n);
      const double unbiased = n > 1 ? var[ch] / static_cast<double>(n - 1) : biased;
      invstd[ch] = 1.0 / std::sqrt(biased + eps);
      rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * mean[ch]);
      rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean.values()[ch];
      invstd[ch] = 1.0 / std::sqrt(static_cast<double>(state.running_var.values()[ch]) + eps);
    }
  }
  const T* gm = gamma.values().data();
  const T* bt = beta.values().data();
  std::vector<T> out(input.size());
  for (std::size_t v = 0; v < n; ++v)
    for (int ch = 0; ch < c; ++ch)
      out[v * c + ch] = static_cast<T>(gm[ch] * ((x[v * c + ch] - mean[ch]) * invstd[ch]) + bt[ch]);

  auto in_node = input.node(), g_node = gamma.node(), b_node = beta.node();
  const bool train = mode == Mode::Train;
  return make_result<T>(
      "batchnorm3d", input.shape(), std::move(out), {in_node, g_node, b_node},
      [=](Node<T>& self) {
        const T* gy = self.grad.data();
        const T* x = in_node->value.data();
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t v = 0; v < n; ++v)
          for (int ch = 0; ch < c; ++ch) {
            const double xhat = (x[v * c + ch] - mean[ch]) * invstd[ch];
            sum_dy[ch] += gy[v * c + ch];
            sum_dy_xhat[ch] += gy[v * c + ch] * xhat;
          }
        if (g_node->requires_grad)
          for (int ch = 0; ch < c; ++ch) g_node->grad[ch] += static_cast<T>(sum_dy_xhat[ch]);
        if (b_node->requires_grad)
          for (int ch = 0; ch < c; ++ch) b_node->grad[ch] += static_cast<T>(sum_dy[ch]);
        if (!in_node->requires_grad) return;
        const T* gm = g_node->value.data();
        T* gx = in_node->grad.data();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t v = 0; v < n; ++v)
          for (int ch = 0; ch < c; ++ch) {
            const double scale = gm[ch] * invstd[ch];
            if (train) {
              const double xhat = (x[v * c + ch] - mean[ch]) * invstd[ch];
              gx[v * c + ch] +=
                  static_cast<T>(scale * (gy[v * c + ch] - inv_n * sum_dy[ch] - xhat * inv_n * sum_dy_xhat[ch]));
            } else {
              gx[v * c + ch] += static_cast<T>(scale * gy[v * c + ch]);
            }
          }
      });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  std::vector<T> out(input.values().begin(), input.values().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  auto in_node = input.node();
  return make_result<T>("relu", input.shape(), std::move(out), {in_node}, [in_node](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (in_node->value[i] > T(0)) in_node->grad[i] += self.grad[i];
  });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  std::vector<T> out(input.size());
  const auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Stable in both tails.
    const double v = x[i];
    out[i] = static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }
  auto in_node = input.node();
  return make_result<T>("sigmoid", input.shape(), std::move(out), {in_node}, [in_node](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.value[i];
      in_node->grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

/// Inverted dropout; identity in eval mode or when p == 0.
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return input;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(input.size());
  std::vector<T> out(input.size());
  const auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? T(0) : keep_scale;
    out[i] = x[i] * (*mask)[i];
  }
  auto in_node = input.node();
  return make_result<T>("dropout", input.shape(), std::move(out), {in_node}, [in_node, mask](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) in_node->grad[i] += self.grad[i] * (*mask)[i];
  });
}

/// Concatenation along the last (channel) axis.
template <class T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() || !std::equal(sa.begin(), sa.end() - 1, sb.begin()))
    throw ShapeError("concat shape mismatch: " + shape_str(sa) + " vs " + shape_str(sb));
  const int ca = sa.back(), cb = sb.back(), cc = ca + cb;
  const std::size_t n = a.size() / static_cast<std::size_t>(ca);
  std::vector<T> out(n * cc);
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (std::size_t v = 0; v < n; ++v) {
    std::copy(pa + v * ca, pa + (v + 1) * ca, out.data() + v * cc);
    std::copy(pb + v * cb, pb + (v + 1) * cb, out.data() + v * cc + ca);
  }
  Shape s = sa;
  s.back() = cc;
  auto na = a.node(), nb = b.node();
  return make_result<T>("concat", s, std::move(out), {na, nb}, [=](Node<T>& self) {
    for (std::size_t v = 0; v < n; ++v) {
      if (na->requires_grad)
        for (int c = 0; c < ca; ++c) na->grad[v * ca + c] += self.grad[v * cc + c];
      if (nb->requires_grad)
        for (int c = 0; c < cb; ++c) nb->grad[v * cb + c] += self.grad[v * cc + ca + c];
    }
  });
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto na = a.node(), nb = b.node();
  return make_result<T>("add", a.shape(), std::move(out), {na, nb}, [na, nb](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na->requires_grad) na->grad[i] += self.grad[i];
      if (nb->requires_grad) nb->grad[i] += self.grad[i];
    }
  });
}

/// Elementwise product.
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto na = a.node(), nb = b.node();
  return make_result<T>("mul", a.shape(), std::move(out), {na, nb}, [na, nb](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na->requires_grad) na->grad[i] += self.grad[i] * nb->value[i];
      if (nb->requires_grad) nb->grad[i] += self.grad[i] * na->value[i];
    }
  });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  double s = 0.0;
  for (T v : a.values()) s += v;
  auto na = a.node();
  return make_result<T>("sum", {}, {static_cast<T>(s)}, {na}, [na](Node<T>& self) {
    const T g = self.grad[0];
    for (T& v : na->grad) v += g;
  });
}

/// out[z,y,x,c] = value * weight[c] + bias[c], tiled over a D x H x W grid.
template <class T>
BasicTensor<T> affine_tile(double value, const BasicTensor<T>& weight, const BasicTensor<T>& bias, int d, int h, int w) {
  if (weight.shape() != bias.shape() || weight.rank() != 1) throw ShapeError("affine_tile expects weight/bias of shape [C]");
  const int c = weight.dim(0);
  const std::size_t n = static_cast<std::size_t>(d) * h * w;
  std::vector<T> out(n * c);
  for (std::size_t v = 0; v < n; ++v)
    for (int ch = 0; ch < c; ++ch)
      out[v * c + ch] = static_cast<T>(value * weight.values()[ch] + bias.values()[ch]);
  auto nw = weight.node(), nb = bias.node();
  return make_result<T>("affine_tile", {d, h, w, c}, std::move(out), {nw, nb}, [=](Node<T>& self) {
    std::vector<double> acc(c, 0.0);
    for (std::size_t v = 0; v < n; ++v)
      for (int ch = 0; ch < c; ++ch) acc[ch] += self.grad[v * c + ch];
    for (int ch = 0; ch < c; ++ch) {
      if (nw->requires_grad) nw->grad[ch] += static_cast<T>(value * acc[ch]);
      if (nb->requires_grad) nb->grad[ch] += static_cast<T>(acc[ch]);
    }
  });
}

inline constexpr double kProbClamp = 1e-7;

/// (1 / N) * sum_v mask[v] * BCE(target[v], pred[v]) with soft targets, N = sum(mask).
/// Predictions are clamped to [1e-7, 1 - 1e-7]; the clamp passes no gradient.
template <class T>
BasicTensor<T> masked_bce(const BasicTensor<T>& pred, std::span<const float> target, std::span<const std::uint8_t> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw ShapeError("masked_bce size mismatch: prediction " + std::to_string(pred.size()) + ", target " +
                     std::to_string(target.size()) + ", mask " + std::to_string(mask.size()));
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked loss with an empty mask (N_s = 0)");
  const double inv_n = 1.0 / static_cast<double>(count);
  const auto p = pred.values();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    const double q = std::clamp(static_cast<double>(p[i]), kProbClamp, 1.0 - kProbClamp);
    const double t = target[i];
    total -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
  }
  auto np = pred.node();
  std::vector<float> tgt(target.begin(), target.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return make_result<T>("masked_bce", {}, {static_cast<T>(total * inv_n)}, {np},
                        [np, tgt = std::move(tgt), msk = std::move(msk), inv_n](Node<T>& self) {
                          const double g = self.grad[0] * inv_n;
                          for (std::size_t i = 0; i < np->value.size(); ++i) {
                            if (!msk[i]) continue;
                            const double q = np->value[i];
                            if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
                            np->grad[i] += static_cast<T>(g * (q - tgt[i]) / (q * (1.0 - q)));
                          }
                        });
}

}  // namespace volrig::nn
