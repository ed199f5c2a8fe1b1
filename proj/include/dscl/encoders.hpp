#pragma once

#include <optional>
#include <string>

#include "dscl/layers.hpp"

namespace dscl {

// One block of the encoder schema, in [channel, kernel_stride_dilation]
// x layers notation. When repeat > 1 the
// stride applies to the first instance only. pool_kernel 0 means no
// pooling after the block.
struct ConvBlockSpec {
  int channels = 0;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int repeat = 1;
  bool relu = true;
  int pool_kernel = 0;
  int pool_stride = 0;
  // blocks standing in for pretrained backbone layers follow the
  // pretrained-layer learning rate; blocks added on top (the dilated
  // context blocks) follow the new-layer rate
  bool pretrained = true;
};

struct EncoderConfig {
  std::vector<ConvBlockSpec> blocks;
  int in_channels = 3;
  double l2_scale = 400.0;
  int input_h = 64, input_w = 64;
  // multilayer fusion: two tap points, per-tap 1x1 reduction, shared-scale
  // L2 norms, concat, final 1x1 reduction
  bool multilayer = false;
  int tap_a = -1, tap_b = -1;  // flattened layer indices (output after layer)
  int reduce_channels = 16;
  int output_channels = 32;
};

struct SceneEncoderConfig {
  std::vector<ConvBlockSpec> blocks;
  int in_channels = 3;
  int fc_width = 128;
  double l2_scale = 9.0;
  int input_size = 32;  // images are resized to this square before encoding
};

// flattened execution plan
struct EncLayerSpec {
  bool pool = false;
  int channels = 0, kernel = 0, stride = 1, dilation = 1;
  bool relu = true;
};

inline std::vector<EncLayerSpec> flatten_blocks(
    const std::vector<ConvBlockSpec>& blocks) {
  std::vector<EncLayerSpec> out;
  for (const auto& b : blocks) {
    if (b.channels <= 0 || b.kernel <= 0 || b.repeat <= 0)
      throw ConfigError("encoder: bad block spec");
    for (int r = 0; r < b.repeat; ++r) {
      EncLayerSpec l;
      l.channels = b.channels;
      l.kernel = b.kernel;
      l.stride = r == 0 ? b.stride : 1;
      l.dilation = b.dilation;
      l.relu = b.relu;
      out.push_back(l);
    }
    if (b.pool_kernel > 0) {
      EncLayerSpec l;
      l.pool = true;
      l.kernel = b.pool_kernel;
      l.stride = b.pool_stride > 0 ? b.pool_stride : b.pool_kernel;
      out.push_back(l);
    }
  }
  return out;
}

inline int stride_product(const std::vector<ConvBlockSpec>& blocks) {
  int s = 1;
  for (const auto& l : flatten_blocks(blocks)) s *= l.stride;
  return s;
}

// rf = 1 + sum over layers of (kernel-1) * dilation * (stride product so far)
inline int receptive_field(const std::vector<ConvBlockSpec>& blocks) {
  int rf = 1, jump = 1;
  for (const auto& l : flatten_blocks(blocks)) {
    rf += (l.kernel - 1) * (l.pool ? 1 : l.dilation) * jump;
    jump *= l.stride;
  }
  return rf;
}

inline int encoder_output_channels(const EncoderConfig& cfg) {
  if (cfg.multilayer) return cfg.output_channels;
  if (cfg.blocks.empty()) throw ConfigError("encoder: no blocks");
  return cfg.blocks.back().channels;
}

// ---- parameters -------------------------------------------------------------

template <typename T>
struct EncoderParams {
  std::vector<Conv2D<T>> convs;  // in flatten order, pools excluded
  Tensor<T> scale;               // {1}, the final L2-norm scale
  // multilayer extras
  Conv2D<T> reduce_a, reduce_b, fuse;
  Tensor<T> ml_scale;  // {1}, shared by both tap norms

  template <typename F>
  void visit(F&& fn) {
    for (size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "conv" + std::to_string(i) + ".";
      fn((p + "kernels").c_str(), convs[i].kernels);
      fn((p + "bias").c_str(), convs[i].bias);
    }
    if (!scale.empty()) fn("scale", scale);
    if (!ml_scale.empty()) {
      fn("reduce_a.kernels", reduce_a.kernels);
      fn("reduce_a.bias", reduce_a.bias);
      fn("reduce_b.kernels", reduce_b.kernels);
      fn("reduce_b.bias", reduce_b.bias);
      fn("fuse.kernels", fuse.kernels);
      fn("fuse.bias", fuse.bias);
      fn("ml_scale", ml_scale);
    }
  }
};

template <typename T>
Conv2D<T> make_conv(int cout, int cin, int k, int stride, int dilation,
                    Activation act, Rng& rng) {
  Conv2D<T> p;
  p.kernels = Tensor<T>({cout, cin, k, k});
  const double r = 1.0 / std::sqrt(double(cin) * k * k);
  for (size_t i = 0; i < p.kernels.size(); ++i)
    p.kernels[i] = T(rng.uniform(-r, r));
  p.bias = Tensor<T>({cout});
  p.stride = stride;
  p.dilation = dilation;
  p.act = act;
  return p;
}

template <typename T>
EncoderParams<T> make_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  EncoderParams<T> p;
  int cin = cfg.in_channels;
  for (const auto& l : flatten_blocks(cfg.blocks)) {
    if (l.pool) continue;
    auto conv = make_conv<T>(l.channels, cin, l.kernel, l.stride, l.dilation,
                             l.relu ? Activation::relu : Activation::none, rng);
    // same-width stride-1 layers: half the channels lean toward the
    // identity to carry the features below, the other half stay pure
    // mixing taps so context and self signals land in separate channels
    if (l.channels == cin && l.stride == 1) {
      const int kh = conv.kernels.dim(2), kw = conv.kernels.dim(3);
      for (int o = 0; o < l.channels; o += 2)
        conv.kernels[((size_t(o) * cin + o) * kh + kh / 2) * kw + kw / 2] += T(1);
    }
    p.convs.push_back(std::move(conv));
    cin = l.channels;
  }
  p.scale = Tensor<T>({1}, {T(cfg.l2_scale)});
  if (cfg.multilayer) {
    const auto layers = flatten_blocks(cfg.blocks);
    auto channels_after = [&](int tap) {
      int c = cfg.in_channels;
      for (int i = 0; i <= tap && i < int(layers.size()); ++i)
        if (!layers[size_t(i)].pool) c = layers[size_t(i)].channels;
      return c;
    };
    if (cfg.tap_a < 0 || cfg.tap_b < 0 || cfg.tap_a >= int(layers.size()) ||
        cfg.tap_b >= int(layers.size()))
      throw ConfigError("encoder: multilayer taps out of range");
    p.reduce_a = make_conv<T>(cfg.reduce_channels, channels_after(cfg.tap_a), 1,
                              1, 1, Activation::relu, rng);
    p.reduce_b = make_conv<T>(cfg.reduce_channels, channels_after(cfg.tap_b), 1,
                              1, 1, Activation::relu, rng);
    p.fuse = make_conv<T>(cfg.output_channels, 2 * cfg.reduce_channels, 1, 1, 1,
                          Activation::none, rng);
    p.ml_scale = Tensor<T>({1}, {T(cfg.l2_scale)});
  }
  return p;
}

template <typename T>
EncoderParams<T> encoder_params_like(const EncoderParams<T>& p) {
  EncoderParams<T> g;
  for (const auto& c : p.convs) g.convs.push_back(conv_like(c));
  g.scale = Tensor<T>(p.scale.shape());
  if (!p.ml_scale.empty()) {
    g.reduce_a = conv_like(p.reduce_a);
    g.reduce_b = conv_like(p.reduce_b);
    g.fuse = conv_like(p.fuse);
    g.ml_scale = Tensor<T>(p.ml_scale.shape());
  }
  return g;
}

// ---- forward / backward ------------------------------------------------------

template <typename T>
struct EncCache {
  std::vector<Tensor<T>> inputs;   // per flattened layer
  std::vector<Tensor<T>> preacts;  // conv layers (pool entries stay empty)
  std::vector<std::vector<int>> argmax;
  Tensor<T> prenorm;
  // multilayer intermediates
  Tensor<T> tap_a_out, tap_b_out, ra_pre, rb_pre, na_in, nb_in, fuse_in;
};

namespace detail {

template <typename T>
Tensor<T> run_conv_stack(const Tensor<T>& image, const EncoderConfig& cfg,
                         const EncoderParams<T>& p, int last_layer,
                         EncCache<T>* cache) {
  const auto layers = flatten_blocks(cfg.blocks);
  if (cache) {
    cache->inputs.clear();
    cache->preacts.assign(layers.size(), Tensor<T>());
    cache->argmax.assign(layers.size(), {});
  }
  Tensor<T> cur = image;
  size_t conv_i = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (int(i) > last_layer && last_layer >= 0) break;
    const auto& l = layers[i];
    if (cache) cache->inputs.push_back(cur);
    if (l.pool) {
      std::vector<int> am;
      cur = max_pool(cur, l.kernel, l.stride, cache ? &am : nullptr);
      if (cache) cache->argmax[i] = std::move(am);
    } else {
      Tensor<T> pre;
      cur = conv2d_forward(cur, p.convs[conv_i], cache ? &pre : nullptr);
      if (cache) cache->preacts[i] = std::move(pre);
      ++conv_i;
    }
  }
  return cur;
}

}  // namespace detail

// Stride-8 local feature extractor: conv stack per config, whole-map L2
// normalization to a learned scale.
template <typename T>
Tensor<T> local_encode(const Tensor<T>& image, const EncoderConfig& cfg,
                       const EncoderParams<T>& p, EncCache<T>* cache = nullptr) {
  if (stride_product(cfg.blocks) != 8)
    throw ConfigError("encoder: stride product must be 8");
  if (cfg.multilayer) {
    const int last = std::max(cfg.tap_a, cfg.tap_b);
    EncCache<T> local_cache;
    EncCache<T>* cc = cache ? cache : &local_cache;
    Tensor<T> stack_out = detail::run_conv_stack(image, cfg, p, last, cc);
    // tap output = input of the next layer, or the stack output at the end
    auto tap_out = [&](int tap) -> Tensor<T> {
      if (tap + 1 < int(cc->inputs.size())) return cc->inputs[size_t(tap) + 1];
      return stack_out;
    };
    Tensor<T> a = tap_out(cfg.tap_a);
    Tensor<T> b = tap_out(cfg.tap_b);
    if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
      throw DimError("encoder: multilayer tap spatial dims differ");
    Tensor<T> ra_pre, rb_pre;
    Tensor<T> ra = conv2d_forward(a, p.reduce_a, &ra_pre);
    Tensor<T> rb = conv2d_forward(b, p.reduce_b, &rb_pre);
    Tensor<T> na = l2norm_scale(ra, p.ml_scale[0]);
    Tensor<T> nb = l2norm_scale(rb, p.ml_scale[0]);
    Tensor<T> cat = concat_channels(na, nb);
    Tensor<T> out = conv2d_forward(cat, p.fuse);
    if (cache) {
      cache->tap_a_out = std::move(a);
      cache->tap_b_out = std::move(b);
      cache->ra_pre = std::move(ra_pre);
      cache->rb_pre = std::move(rb_pre);
      cache->na_in = std::move(ra);
      cache->nb_in = std::move(rb);
      cache->fuse_in = std::move(cat);
    }
    return out;
  }
  Tensor<T> features = detail::run_conv_stack(image, cfg, p, -1, cache);
  if (cache) cache->prenorm = features;
  return l2norm_scale(features, p.scale[0]);
}

namespace detail {

template <typename T>
Tensor<T> conv_stack_backward(const EncoderConfig& cfg, const EncoderParams<T>& p,
                              const EncCache<T>& cache, Tensor<T> dcur,
                              EncoderParams<T>& grads) {
  const auto layers = flatten_blocks(cfg.blocks);
  const int ran = int(cache.inputs.size());
  size_t conv_total = 0;
  for (int i = 0; i < ran; ++i)
    if (!layers[size_t(i)].pool) ++conv_total;
  size_t conv_i = conv_total;
  for (int i = ran - 1; i >= 0; --i) {
    const auto& l = layers[size_t(i)];
    const Tensor<T>& in = cache.inputs[size_t(i)];
    if (l.pool) {
      dcur = max_pool_backward(cache.argmax[size_t(i)], dcur, in.dim(0),
                               in.dim(1), in.dim(2));
    } else {
      --conv_i;
      dcur = conv2d_backward(in, p.convs[conv_i], cache.preacts[size_t(i)],
                             dcur, grads.convs[conv_i]);
    }
  }
  return dcur;
}

}  // namespace detail

template <typename T>
Tensor<T> local_encode_backward(const EncoderConfig& cfg, const EncoderParams<T>& p,
                                const EncCache<T>& cache, const Tensor<T>& dout,
                                EncoderParams<T>& grads) {
  if (cfg.multilayer) {
    Tensor<T> dcat = conv2d_backward(cache.fuse_in, p.fuse, Tensor<T>(), dout,
                                     grads.fuse);
    const int rc = p.reduce_a.out_channels();
    Tensor<T> dna = slice_channels(dcat, 0, rc);
    Tensor<T> dnb = slice_channels(dcat, rc, 2 * rc);
    T dscale = 0;
    Tensor<T> dra = l2norm_scale_backward(cache.na_in, p.ml_scale[0], dna, dscale);
    Tensor<T> drb = l2norm_scale_backward(cache.nb_in, p.ml_scale[0], dnb, dscale);
    grads.ml_scale[0] += dscale;
    Tensor<T> da = conv2d_backward(cache.tap_a_out, p.reduce_a, cache.ra_pre,
                                   dra, grads.reduce_a);
    Tensor<T> db = conv2d_backward(cache.tap_b_out, p.reduce_b, cache.rb_pre,
                                   drb, grads.reduce_b);
    // the later tap's gradient enters at its layer; the earlier tap's joins
    // where both paths read the same activation
    const auto layers = flatten_blocks(cfg.blocks);
    const int last = std::max(cfg.tap_a, cfg.tap_b);
    const int first = std::min(cfg.tap_a, cfg.tap_b);
    const Tensor<T>& dlast = cfg.tap_a >= cfg.tap_b ? da : db;
    const Tensor<T>& dfirst = cfg.tap_a >= cfg.tap_b ? db : da;
    Tensor<T> dcur = dlast;
    if (first == last)
      for (size_t k = 0; k < dcur.size(); ++k) dcur[k] += dfirst[k];
    size_t conv_i = 0;
    for (int i = 0; i <= last; ++i)
      if (!layers[size_t(i)].pool) ++conv_i;
    for (int i = last; i >= 0; --i) {
      if (i == first && first != last)
        for (size_t k = 0; k < dcur.size(); ++k) dcur[k] += dfirst[k];
      const auto& l = layers[size_t(i)];
      const Tensor<T>& in = cache.inputs[size_t(i)];
      if (l.pool) {
        dcur = max_pool_backward(cache.argmax[size_t(i)], dcur, in.dim(0),
                                 in.dim(1), in.dim(2));
      } else {
        --conv_i;
        dcur = conv2d_backward(in, p.convs[conv_i], cache.preacts[size_t(i)],
                               dcur, grads.convs[conv_i]);
      }
    }
    return dcur;
  }
  T dscale = 0;
  Tensor<T> dpre = l2norm_scale_backward(cache.prenorm, p.scale[0], dout, dscale);
  grads.scale[0] += dscale;
  EncoderParams<T>& g = grads;
  return detail::conv_stack_backward(cfg, p, cache, std::move(dpre), g);
}

// ---- scene encoder -----------------------------------------------------------

template <typename T>
struct SceneParams {
  std::vector<Conv2D<T>> convs;
  Tensor<T> fc_w;  // width x C
  Tensor<T> fc_b;  // width
  Tensor<T> scale; // {1}

  template <typename F>
  void visit(F&& fn) {
    for (size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "conv" + std::to_string(i) + ".";
      fn((p + "kernels").c_str(), convs[i].kernels);
      fn((p + "bias").c_str(), convs[i].bias);
    }
    fn("fc_w", fc_w);
    fn("fc_b", fc_b);
    fn("scale", scale);
  }
};

template <typename T>
SceneParams<T> make_scene_params(const SceneEncoderConfig& cfg, Rng& rng) {
  SceneParams<T> p;
  int cin = cfg.in_channels;
  for (const auto& l : flatten_blocks(cfg.blocks)) {
    if (l.pool) continue;
    p.convs.push_back(make_conv<T>(l.channels, cin, l.kernel, l.stride,
                                   l.dilation,
                                   l.relu ? Activation::relu : Activation::none,
                                   rng));
    cin = l.channels;
  }
  p.fc_w = Tensor<T>({cfg.fc_width, cin});
  const double r = 1.0 / std::sqrt(double(cin));
  for (size_t i = 0; i < p.fc_w.size(); ++i) p.fc_w[i] = T(rng.uniform(-r, r));
  p.fc_b = Tensor<T>({cfg.fc_width});
  p.scale = Tensor<T>({1}, {T(cfg.l2_scale)});
  return p;
}

template <typename T>
SceneParams<T> scene_params_like(const SceneParams<T>& p) {
  SceneParams<T> g;
  for (const auto& c : p.convs) g.convs.push_back(conv_like(c));
  g.fc_w = Tensor<T>(p.fc_w.shape());
  g.fc_b = Tensor<T>(p.fc_b.shape());
  g.scale = Tensor<T>(p.scale.shape());
  return g;
}

template <typename T>
struct SceneCache {
  std::vector<Tensor<T>> inputs, preacts;
  std::vector<std::vector<int>> argmax;
  int gap_h = 0, gap_w = 0;
  std::vector<T> gap;      // pooled features
  std::vector<T> fc_pre;   // before relu
  Tensor<T> prenorm;       // after relu, before the L2 norm
};

// conv stack -> global average pool -> FC(width) + relu -> L2-norm scale.
// The output norm equals the scale (9 by default).
template <typename T>
std::vector<T> scene_encode(const Tensor<T>& image, const SceneEncoderConfig& cfg,
                            const SceneParams<T>& p, SceneCache<T>* cache = nullptr) {
  const auto layers = flatten_blocks(cfg.blocks);
  if (cache) {
    cache->inputs.clear();
    cache->preacts.assign(layers.size(), Tensor<T>());
    cache->argmax.assign(layers.size(), {});
  }
  Tensor<T> cur = image;
  size_t conv_i = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (cache) cache->inputs.push_back(cur);
    if (l.pool) {
      std::vector<int> am;
      cur = max_pool(cur, l.kernel, l.stride, cache ? &am : nullptr);
      if (cache) cache->argmax[i] = std::move(am);
    } else {
      Tensor<T> pre;
      cur = conv2d_forward(cur, p.convs[conv_i], cache ? &pre : nullptr);
      if (cache) cache->preacts[i] = std::move(pre);
      ++conv_i;
    }
  }
  const int h = cur.dim(0), w = cur.dim(1), c = cur.dim(2);
  std::vector<T> gap(size_t(c), T(0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) gap[size_t(k)] += cur.at3(y, x, k);
  const T inv = T(1) / T(h * w);
  for (auto& v : gap) v *= inv;

  const int width = p.fc_w.dim(0);
  std::vector<T> pre(p.fc_b.vec());
  matvec_acc(p.fc_w.data(), width, c, gap.data(), pre.data());
  Tensor<T> relu_out({width});
  for (int k = 0; k < width; ++k) relu_out[size_t(k)] = std::max(pre[size_t(k)], T(0));
  Tensor<T> normed = l2norm_scale(relu_out, p.scale[0]);
  if (cache) {
    cache->gap_h = h;
    cache->gap_w = w;
    cache->gap = std::move(gap);
    cache->fc_pre = std::move(pre);
    cache->prenorm = std::move(relu_out);
  }
  return normed.vec();
}

template <typename T>
Tensor<T> scene_encode_backward(const SceneEncoderConfig& cfg,
                                const SceneParams<T>& p, const SceneCache<T>& cache,
                                const std::vector<T>& dvec, SceneParams<T>& grads) {
  const int width = p.fc_w.dim(0);
  const int c = int(cache.gap.size());
  Tensor<T> dout({width}, dvec);
  T dscale = 0;
  Tensor<T> drelu = l2norm_scale_backward(cache.prenorm, p.scale[0], dout, dscale);
  grads.scale[0] += dscale;
  std::vector<T> dpre(size_t(width), T(0));
  for (int k = 0; k < width; ++k)
    dpre[size_t(k)] = cache.fc_pre[size_t(k)] > T(0) ? drelu[size_t(k)] : T(0);
  for (int k = 0; k < width; ++k) grads.fc_b[size_t(k)] += dpre[size_t(k)];
  outer_acc(dpre.data(), width, cache.gap.data(), c, grads.fc_w.data());
  std::vector<T> dgap(size_t(c), T(0));
  matvec_t_acc(p.fc_w.data(), width, c, dpre.data(), dgap.data());

  const int h = cache.gap_h, w = cache.gap_w;
  Tensor<T> dfeat({h, w, c});
  const T inv = T(1) / T(h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) dfeat.at3(y, x, k) = dgap[size_t(k)] * inv;

  const auto layers = flatten_blocks(cfg.blocks);
  Tensor<T> dcur = std::move(dfeat);
  size_t conv_i = p.convs.size();
  for (int i = int(layers.size()) - 1; i >= 0; --i) {
    const auto& l = layers[size_t(i)];
    const Tensor<T>& in = cache.inputs[size_t(i)];
    if (l.pool) {
      dcur = max_pool_backward(cache.argmax[size_t(i)], dcur, in.dim(0),
                               in.dim(1), in.dim(2));
    } else {
      --conv_i;
      dcur = conv2d_backward(in, p.convs[conv_i], cache.preacts[size_t(i)],
                             dcur, grads.convs[conv_i]);
    }
  }
  return dcur;
}

// ---- external feature loading ------------------------------------------------

// Lets callers substitute real pretrained features for the toy encoders.
template <typename T>
Tensor<T> load_feature_map(const std::string& path,
                           std::optional<double> renorm_scale = {}) {
  Tensor<T> t = load_tensor<T>(path);
  if (t.rank() != 3)
    throw DataError("load_feature_map: rank-3 tensor required, got rank " +
                    std::to_string(t.rank()));
  if (renorm_scale) return l2norm_scale(t, T(*renorm_scale));
  return t;
}

template <typename T>
Tensor<T> load_scene_vector(const std::string& path,
                            std::optional<double> renorm_scale = {}) {
  Tensor<T> t = load_tensor<T>(path);
  if (t.rank() != 1)
    throw DataError("load_scene_vector: rank-1 tensor required, got rank " +
                    std::to_string(t.rank()));
  if (renorm_scale) return l2norm_scale(t, T(*renorm_scale));
  return t;
}

// ---- presets -------------------------------------------------------------

// Desk-scale defaults plus the full-size backbone schemas.
inline EncoderConfig encoder_preset(const std::string& name) {
  EncoderConfig cfg;
  if (name == "toy") {
    cfg.blocks = {{16, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 1, 2, 1, true}};
  } else if (name == "rf-small") {
    cfg.blocks = {{16, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true}};
  } else if (name == "rf-large") {
    // the added dilated context block trains from scratch
    cfg.blocks = {{16, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 1, 2, 1, true},
                  {32, 3, 1, 4, 1, true, 0, 0, false}};
  } else if (name == "toy-ml") {
    cfg.blocks = {{16, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 2, 1, 1, true},
                  {32, 3, 1, 2, 1, true}};
    cfg.multilayer = true;
    cfg.tap_a = 2;  // after the stride-8 conv
    cfg.tap_b = 3;  // after the dilated conv
    cfg.reduce_channels = 16;
    cfg.output_channels = 32;
  } else if (name == "table1") {
    // VGG-based extractor: pool4/pool5 dropped, conv5 dilation 2, two extra
    // dilated blocks, whole-map L2 norm with scale 400
    cfg.blocks = {{64, 3, 1, 1, 2, true, 2, 2},
                  {128, 3, 1, 1, 2, true, 2, 2},
                  {256, 3, 1, 1, 3, true, 2, 2},
                  {512, 3, 1, 1, 3, true},
                  {512, 3, 1, 2, 3, true},
                  {512, 3, 1, 4, 2, true, 0, 0, false},
                  {512, 3, 1, 4, 2, true, 0, 0, false}};
    cfg.input_h = 480;
    cfg.input_w = 640;
  } else if (name == "table2") {
    // ResNet50-based extractor flattened to a plain schema: conv3 stride 2,
    // conv4/conv5 dilated, 1x1 channel reduction to 512
    cfg.blocks.push_back({64, 7, 2, 1, 1, true, 3, 2});
    for (int i = 0; i < 3; ++i) {
      cfg.blocks.push_back({64, 1, 1, 1, 1, true});
      cfg.blocks.push_back({64, 3, 1, 1, 1, true});
      cfg.blocks.push_back({256, 1, 1, 1, 1, true});
    }
    for (int i = 0; i < 4; ++i) {
      cfg.blocks.push_back({128, 1, i == 0 ? 2 : 1, 1, 1, true});
      cfg.blocks.push_back({128, 3, 1, 1, 1, true});
      cfg.blocks.push_back({512, 1, 1, 1, 1, true});
    }
    for (int i = 0; i < 6; ++i) {
      cfg.blocks.push_back({256, 1, 1, 1, 1, true});
      cfg.blocks.push_back({256, 3, 1, 2, 1, true});
      cfg.blocks.push_back({1024, 1, 1, 1, 1, true});
    }
    for (int i = 0; i < 3; ++i) {
      cfg.blocks.push_back({512, 1, 1, 1, 1, true});
      cfg.blocks.push_back({512, 3, 1, 2, 1, true});
      cfg.blocks.push_back({2048, 1, 1, 1, 1, true});
    }
    cfg.blocks.push_back({512, 1, 1, 1, 1, true});
    cfg.input_h = 480;
    cfg.input_w = 640;
  } else {
    throw ConfigError("unknown encoder preset: " + name);
  }
  return cfg;
}

inline SceneEncoderConfig scene_encoder_preset(const std::string& name) {
  SceneEncoderConfig cfg;
  if (name == "toy") {
    cfg.blocks = {{8, 3, 2, 1, 1, true}, {8, 3, 2, 1, 1, true}};
    cfg.input_size = 32;
  } else if (name == "places227") {
    cfg.blocks = {{32, 3, 2, 1, 1, true},
                  {64, 3, 2, 1, 1, true},
                  {64, 3, 2, 1, 1, true}};
    cfg.input_size = 227;
  } else {
    throw ConfigError("unknown scene encoder preset: " + name);
  }
  return cfg;
}

}  // namespace dscl
