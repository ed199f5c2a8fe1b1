#pragma once

#include <limits>

#include "dscl/tensor.hpp"

namespace dscl {

enum class Activation { none, relu };

// ---- dilated convolution ---------------------------------------------------

template <typename T>
struct Conv2D {
  Tensor<T> kernels;  // out x in x kh x kw, kh and kw odd
  Tensor<T> bias;     // out
  int stride = 1;
  int dilation = 1;
  Activation act = Activation::none;

  int out_channels() const { return kernels.dim(0); }
  int in_channels() const { return kernels.dim(1); }
};

template <typename T>
void validate_conv(const Conv2D<T>& p) {
  if (p.kernels.rank() != 4) throw DimError("conv: kernels must be rank-4");
  if (p.kernels.dim(2) % 2 == 0 || p.kernels.dim(3) % 2 == 0)
    throw ConfigError("conv: kernel dims must be odd for same padding");
  if (p.stride < 1 || p.dilation < 1)
    throw ConfigError("conv: stride and dilation must be >= 1");
  if (p.bias.rank() != 1 || p.bias.dim(0) != p.kernels.dim(0))
    throw DimError("conv: bias length must equal output channels");
}

// Zero-padded "same" spatial semantics before stride; H' = ceil(H/stride).
// If preact is given it receives the pre-activation map (needed for the
// relu backward).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Conv2D<T>& p,
                         Tensor<T>* preact = nullptr) {
  validate_conv(p);
  if (in.rank() != 3) throw DimError("conv: input must be rank-3 (H,W,C)");
  if (in.dim(2) != p.in_channels())
    throw DimError("conv: input channels " + std::to_string(in.dim(2)) +
                   " do not match kernel channels " +
                   std::to_string(p.in_channels()));
  const int h = in.dim(0), w = in.dim(1), cin = in.dim(2);
  const int cout = p.out_channels(), kh = p.kernels.dim(2), kw = p.kernels.dim(3);
  const int s = p.stride, d = p.dilation;
  const int ho = (h + s - 1) / s, wo = (w + s - 1) / s;
  Tensor<T> out({ho, wo, cout});
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      for (int o = 0; o < cout; ++o) {
        T acc = p.bias[size_t(o)];
        const T* kbase = p.kernels.data() + size_t(o) * cin * kh * kw;
        for (int c = 0; c < cin; ++c) {
          const T* kc = kbase + size_t(c) * kh * kw;
          for (int i = 0; i < kh; ++i) {
            const int iy = y * s + (i - kh / 2) * d;
            if (iy < 0 || iy >= h) continue;
            for (int j = 0; j < kw; ++j) {
              const int ix = x * s + (j - kw / 2) * d;
              if (ix < 0 || ix >= w) continue;
              acc += kc[size_t(i) * kw + j] * in.at3(iy, ix, c);
            }
          }
        }
        out.at3(y, x, o) = acc;
      }
    }
  }
  if (preact) *preact = out;
  if (p.act == Activation::relu)
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], T(0));
  return out;
}

// Returns dIn; accumulates parameter gradients into grads (same shapes as p).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& in, const Conv2D<T>& p,
                          const Tensor<T>& preact, const Tensor<T>& dout,
                          Conv2D<T>& grads) {
  const int h = in.dim(0), w = in.dim(1), cin = in.dim(2);
  const int cout = p.out_channels(), kh = p.kernels.dim(2), kw = p.kernels.dim(3);
  const int s = p.stride, d = p.dilation;
  const int ho = dout.dim(0), wo = dout.dim(1);
  Tensor<T> din({h, w, cin});
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      for (int o = 0; o < cout; ++o) {
        T g = dout.at3(y, x, o);
        if (p.act == Activation::relu && preact.at3(y, x, o) <= T(0)) continue;
        if (g == T(0)) continue;
        grads.bias[size_t(o)] += g;
        T* kgbase = grads.kernels.data() + size_t(o) * cin * kh * kw;
        const T* kbase = p.kernels.data() + size_t(o) * cin * kh * kw;
        for (int c = 0; c < cin; ++c) {
          T* kgc = kgbase + size_t(c) * kh * kw;
          const T* kc = kbase + size_t(c) * kh * kw;
          for (int i = 0; i < kh; ++i) {
            const int iy = y * s + (i - kh / 2) * d;
            if (iy < 0 || iy >= h) continue;
            for (int j = 0; j < kw; ++j) {
              const int ix = x * s + (j - kw / 2) * d;
              if (ix < 0 || ix >= w) continue;
              kgc[size_t(i) * kw + j] += g * in.at3(iy, ix, c);
              din.at3(iy, ix, c) += g * kc[size_t(i) * kw + j];
            }
          }
        }
      }
    }
  }
  return din;
}

template <typename T>
Conv2D<T> conv_like(const Conv2D<T>& p) {
  Conv2D<T> g;
  g.kernels = Tensor<T>(p.kernels.shape());
  g.bias = Tensor<T>(p.bias.shape());
  g.stride = p.stride;
  g.dilation = p.dilation;
  g.act = p.act;
  return g;
}

// Receptive field of a single conv layer: 1 + dilation * (kernel - 1).
inline int conv_receptive_field(int kernel, int dilation) {
  return 1 + dilation * (kernel - 1);
}

// ---- L2-norm scale ---------------------------------------------------------

// Normalizes the whole tensor to unit L2 norm, then multiplies by a learned
// scalar; the output norm equals the scale.
template <typename T>
Tensor<T> l2norm_scale(const Tensor<T>& in, T scale) {
  double sq = 0;
  for (size_t i = 0; i < in.size(); ++i) sq += double(in[i]) * double(in[i]);
  const double norm = std::sqrt(sq);
  if (norm < 1e-12)
    throw NumericError("l2norm_scale: degenerate input (near-zero norm)");
  Tensor<T> out(in.shape());
  const T f = T(double(scale) / norm);
  for (size_t i = 0; i < in.size(); ++i) out[i] = in[i] * f;
  return out;
}

// Returns dIn; accumulates the scale gradient into dscale.
template <typename T>
Tensor<T> l2norm_scale_backward(const Tensor<T>& in, T scale,
                                const Tensor<T>& dout, T& dscale) {
  double sq = 0, xg = 0;
  for (size_t i = 0; i < in.size(); ++i) {
    sq += double(in[i]) * double(in[i]);
    xg += double(in[i]) * double(dout[i]);
  }
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) throw NumericError("l2norm_scale: degenerate input");
  dscale += T(xg / norm);
  Tensor<T> din(in.shape());
  const double a = double(scale) / norm;
  const double b = double(scale) * xg / (norm * norm * norm);
  for (size_t i = 0; i < in.size(); ++i)
    din[i] = T(a * double(dout[i]) - b * double(in[i]));
  return din;
}

// ---- map softmax -----------------------------------------------------------

// Softmax over all H*W positions of a single-channel map; introduces
// lateral competition. Max-subtracted for stability.
template <typename T>
Tensor<T> softmax_map(const Tensor<T>& logits) {
  if (logits.rank() != 3 || logits.dim(2) != 1)
    throw DimError("softmax_map: H x W x 1 map required");
  if (!all_finite(logits)) throw NumericError("softmax_map: non-finite logits");
  T mx = logits[0];
  for (size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  Tensor<T> out(logits.shape());
  double sum = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += double(out[i]);
  }
  const T inv = T(1.0 / sum);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  return out;
}

template <typename T>
Tensor<T> softmax_map_backward(const Tensor<T>& y, const Tensor<T>& dout) {
  double dot = 0;
  for (size_t i = 0; i < y.size(); ++i) dot += double(y[i]) * double(dout[i]);
  Tensor<T> din(y.shape());
  for (size_t i = 0; i < y.size(); ++i)
    din[i] = y[i] * (dout[i] - T(dot));
  return din;
}

// ---- bilinear upsampling ---------------------------------------------------

// Fixed interpolation kernel of the fully-convolutional upsampling
// convention: size 2f - f%2, w(i) = 1 - |i/f - c| with c = (size-1)/(2f).
template <typename T>
std::vector<T> bilinear_kernel1d(int factor) {
  if (factor < 1) throw ConfigError("bilinear_upsample: factor must be >= 1");
  const int size = 2 * factor - factor % 2;
  const double c = double(size - 1) / (2.0 * factor);
  std::vector<T> k(size_t(size), T(0));
  for (int i = 0; i < size; ++i)
    k[size_t(i)] = T(1.0 - std::abs(double(i) / factor - c));
  return k;
}

// Transposed convolution with the fixed separable bilinear kernel;
// (H,W,C) -> (H*f, W*f, C). The kernel is interpolation, never learned.
template <typename T>
Tensor<T> bilinear_upsample_with_kernel(const Tensor<T>& map, int factor,
                                        const std::vector<T>& k) {
  if (factor < 1) throw ConfigError("bilinear_upsample: factor must be >= 1");
  if (int(k.size()) != 2 * factor - factor % 2)
    throw DimError("bilinear_upsample: kernel size does not match factor");
  if (map.rank() != 3) throw DimError("bilinear_upsample: rank-3 map required");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  const int ks = int(k.size());
  const int pad = (ks - factor) / 2;
  Tensor<T> out({h * factor, w * factor, c});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        const T v = map.at3(y, x, ch);
        if (v == T(0)) continue;
        for (int i = 0; i < ks; ++i) {
          const int oy = y * factor + i - pad;
          if (oy < 0 || oy >= h * factor) continue;
          for (int j = 0; j < ks; ++j) {
            const int ox = x * factor + j - pad;
            if (ox < 0 || ox >= w * factor) continue;
            out.at3(oy, ox, ch) += v * k[size_t(i)] * k[size_t(j)];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& map, int factor) {
  return bilinear_upsample_with_kernel(map, factor, bilinear_kernel1d<T>(factor));
}

template <typename T>
Tensor<T> bilinear_upsample_backward_with_kernel(const Tensor<T>& dout,
                                                 int factor, int h, int w,
                                                 const std::vector<T>& k) {
  const int c = dout.dim(2);
  const int ks = int(k.size());
  const int pad = (ks - factor) / 2;
  Tensor<T> din({h, w, c});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (int i = 0; i < ks; ++i) {
          const int oy = y * factor + i - pad;
          if (oy < 0 || oy >= h * factor) continue;
          for (int j = 0; j < ks; ++j) {
            const int ox = x * factor + j - pad;
            if (ox < 0 || ox >= w * factor) continue;
            acc += dout.at3(oy, ox, ch) * k[size_t(i)] * k[size_t(j)];
          }
        }
        din.at3(y, x, ch) = acc;
      }
    }
  }
  return din;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& dout, int factor, int h,
                                     int w) {
  return bilinear_upsample_backward_with_kernel(dout, factor, h, w,
                                                bilinear_kernel1d<T>(factor));
}

// ---- Gaussian blur ---------------------------------------------------------

// round(4 sigma), forced odd by +1 when even.
inline int gaussian_kernel_size(double sigma) {
  if (sigma <= 0) throw ConfigError("gaussian blur: sigma must be positive");
  int size = int(std::llround(4.0 * sigma));
  if (size % 2 == 0) size += 1;
  return std::max(size, 1);
}

template <typename T>
std::vector<T> gaussian_kernel1d(double sigma, int size) {
  if (sigma <= 0) throw ConfigError("gaussian blur: sigma must be positive");
  if (size < 1 || size % 2 == 0)
    throw ConfigError("gaussian blur: kernel size must be odd and positive");
  std::vector<T> k(size_t(size), T(0));
  const int c = size / 2;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = double(i - c);
    const double v = std::exp(-d * d / (2.0 * sigma * sigma));
    k[size_t(i)] = T(v);
    sum += v;
  }
  // renormalize after truncation so the full kernel sums to 1
  for (auto& v : k) v = T(double(v) / sum);
  return k;
}

// Separable blur; at borders the kernel is renormalized over in-bounds taps,
// so a constant map stays exactly constant.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& map, double sigma, int size) {
  const auto k = gaussian_kernel1d<T>(sigma, size);
  if (map.rank() != 3) throw DimError("gaussian_blur: rank-3 map required");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  const int r = size / 2;
  Tensor<T> tmp(map.shape()), out(map.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0, wsum = 0;
        for (int j = -r; j <= r; ++j) {
          const int ix = x + j;
          if (ix < 0 || ix >= w) continue;
          const double kw = double(k[size_t(j + r)]);
          acc += kw * double(map.at3(y, ix, ch));
          wsum += kw;
        }
        tmp.at3(y, x, ch) = T(acc / wsum);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0, wsum = 0;
        for (int i = -r; i <= r; ++i) {
          const int iy = y + i;
          if (iy < 0 || iy >= h) continue;
          const double kw = double(k[size_t(i + r)]);
          acc += kw * double(tmp.at3(iy, x, ch));
          wsum += kw;
        }
        out.at3(y, x, ch) = T(acc / wsum);
      }
  return out;
}

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& map, double sigma) {
  return gaussian_blur(map, sigma, gaussian_kernel_size(sigma));
}

// ---- max pooling -----------------------------------------------------------

template <typename T>
Tensor<T> max_pool(const Tensor<T>& in, int kernel, int stride,
                   std::vector<int>* argmax = nullptr) {
  if (in.rank() != 3) throw DimError("max_pool: rank-3 input required");
  if (kernel < 1 || stride < 1) throw ConfigError("max_pool: bad kernel/stride");
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  const int ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
  Tensor<T> out({ho, wo, c});
  if (argmax) argmax->assign(out.size(), -1);
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x)
      for (int ch = 0; ch < c; ++ch) {
        T best = -std::numeric_limits<T>::infinity();
        int besti = -1;
        for (int i = 0; i < kernel; ++i) {
          const int iy = y * stride + i;
          if (iy >= h) break;
          for (int j = 0; j < kernel; ++j) {
            const int ix = x * stride + j;
            if (ix >= w) break;
            const T v = in.at3(iy, ix, ch);
            if (v > best) {
              best = v;
              besti = (iy * w + ix) * c + ch;
            }
          }
        }
        out.at3(y, x, ch) = best;
        if (argmax) (*argmax)[(size_t(y) * wo + x) * c + ch] = besti;
      }
  return out;
}

template <typename T>
Tensor<T> max_pool_backward(const std::vector<int>& argmax,
                            const Tensor<T>& dout, int h, int w, int c) {
  Tensor<T> din({h, w, c});
  for (size_t i = 0; i < dout.size(); ++i)
    if (argmax[i] >= 0) din[size_t(argmax[i])] += dout[i];
  return din;
}

// ---- bilinear resize -------------------------------------------------------

// Half-pixel-center bilinear resize to arbitrary dims (image preprocessing
// and saliency-map restoration, not the stride-8 upsampling layer).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& in, int ho, int wo) {
  if (in.rank() != 3) throw DimError("bilinear_resize: rank-3 input required");
  if (ho < 1 || wo < 1) throw ConfigError("bilinear_resize: bad output dims");
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  if (h == ho && w == wo) return in;
  Tensor<T> out({ho, wo, c});
  const double sy = double(h) / ho, sx = double(w) / wo;
  for (int y = 0; y < ho; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = int(std::floor(fy));
    double wy = fy - y0;
    int y1 = std::min(std::max(y0 + 1, 0), h - 1);
    y0 = std::min(std::max(y0, 0), h - 1);
    for (int x = 0; x < wo; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = int(std::floor(fx));
      double wx = fx - x0;
      int x1 = std::min(std::max(x0 + 1, 0), w - 1);
      x0 = std::min(std::max(x0, 0), w - 1);
      for (int ch = 0; ch < c; ++ch) {
        const double v =
            (1 - wy) * ((1 - wx) * in.at3(y0, x0, ch) + wx * in.at3(y0, x1, ch)) +
            wy * ((1 - wx) * in.at3(y1, x0, ch) + wx * in.at3(y1, x1, ch));
        out.at3(y, x, ch) = T(v);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& dout, int h, int w) {
  const int ho = dout.dim(0), wo = dout.dim(1), c = dout.dim(2);
  Tensor<T> din({h, w, c});
  if (h == ho && w == wo) return dout;
  const double sy = double(h) / ho, sx = double(w) / wo;
  for (int y = 0; y < ho; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = int(std::floor(fy));
    double wy = fy - y0;
    int y1 = std::min(std::max(y0 + 1, 0), h - 1);
    y0 = std::min(std::max(y0, 0), h - 1);
    for (int x = 0; x < wo; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = int(std::floor(fx));
      double wx = fx - x0;
      int x1 = std::min(std::max(x0 + 1, 0), w - 1);
      x0 = std::min(std::max(x0, 0), w - 1);
      for (int ch = 0; ch < c; ++ch) {
        const T g = dout.at3(y, x, ch);
        din.at3(y0, x0, ch) += T((1 - wy) * (1 - wx)) * g;
        din.at3(y0, x1, ch) += T((1 - wy) * wx) * g;
        din.at3(y1, x0, ch) += T(wy * (1 - wx)) * g;
        din.at3(y1, x1, ch) += T(wy * wx) * g;
      }
    }
  }
  return din;
}

}  // namespace dscl
