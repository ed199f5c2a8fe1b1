#pragma once

#include "dscl/ablation.hpp"
#include "dscl/gradcheck.hpp"
#include "dscl/training.hpp"

namespace dscl {

// Finite-difference verification of every analytic backward pass, at 64-bit
// with fixed seeds. The end-to-end check drives the full toy pipeline
// (stride-8 encoder over a 64x64 image, so an 8x8 grid, N=8) through the
// negative-NSS objective.

struct GradCheckResult {
  std::string name;
  double rel_err = 0;
  bool pass = false;
};

namespace gradsuite_detail {

constexpr double kTol = 1e-4;

inline double weighted_sum(const Tensor<double>& t, const Tensor<double>& w) {
  double s = 0;
  for (size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

inline Tensor<double> rand_tensor(std::vector<int> shape, Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// biases off zero keep relu preactivations away from the kink and the
// L2 norms away from all-dead maps
template <typename P>
void jitter_biases(P& params, Rng& rng) {
  params.visit([&](const char* name, Tensor<double>& t) {
    const std::string n = name;
    if (n.find("bias") != std::string::npos || n.find("_b") != std::string::npos)
      for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.05, 0.2);
  });
}

template <typename P>
Tensor<double> pack(P& params) {
  std::vector<double> flat;
  params.visit([&](const char*, Tensor<double>& t) {
    flat.insert(flat.end(), t.vec().begin(), t.vec().end());
  });
  const int n = int(flat.size());
  return Tensor<double>({n}, std::move(flat));
}

template <typename P>
void unpack(const Tensor<double>& flat, P& params) {
  size_t pos = 0;
  params.visit([&](const char*, Tensor<double>& t) {
    std::copy(flat.vec().begin() + long(pos),
              flat.vec().begin() + long(pos + t.size()), t.vec().begin());
    pos += t.size();
  });
}

inline void record(std::vector<GradCheckResult>& out, const std::string& name,
                   double rel) {
  out.push_back({name, rel, rel < kTol});
}

inline void check_layers(std::vector<GradCheckResult>& out) {
  Rng rng(301);
  {
    Conv2D<double> p;
    p.kernels = rand_tensor({3, 2, 3, 3}, rng);
    p.bias = rand_tensor({3}, rng, 0.01, 0.05);
    p.stride = 2;
    p.dilation = 2;
    p.act = Activation::relu;
    auto in = rand_tensor({6, 7, 2}, rng);
    Tensor<double> preact;
    auto y = conv2d_forward(in, p, &preact);
    auto w = rand_tensor(y.shape(), rng);
    auto g = conv_like(p);
    auto din = conv2d_backward(in, p, preact, w, g);
    record(out, "layers.conv.input",
           grad_rel_error(din, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return weighted_sum(conv2d_forward(x, p), w);
                                   },
                                   in)));
    record(out, "layers.conv.kernels",
           grad_rel_error(g.kernels, finite_diff_gradient(
                                         [&](const Tensor<double>& k) {
                                           auto q = p;
                                           q.kernels = k;
                                           return weighted_sum(conv2d_forward(in, q), w);
                                         },
                                         p.kernels)));
    record(out, "layers.conv.bias",
           grad_rel_error(g.bias, finite_diff_gradient(
                                      [&](const Tensor<double>& b) {
                                        auto q = p;
                                        q.bias = b;
                                        return weighted_sum(conv2d_forward(in, q), w);
                                      },
                                      p.bias)));
  }
  {
    auto in = rand_tensor({6, 6, 2}, rng);
    std::vector<int> argmax;
    auto y = max_pool(in, 2, 2, &argmax);
    auto w = rand_tensor(y.shape(), rng);
    auto din = max_pool_backward(argmax, w, 6, 6, 2);
    record(out, "layers.maxpool.input",
           grad_rel_error(din, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return weighted_sum(max_pool(x, 2, 2), w);
                                   },
                                   in)));
  }
  {
    auto in = rand_tensor({3, 4, 2}, rng);
    auto w = rand_tensor(in.shape(), rng);
    const double scale = 5.0;
    double dscale = 0;
    auto din = l2norm_scale_backward(in, scale, w, dscale);
    record(out, "layers.l2norm.input",
           grad_rel_error(din, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return weighted_sum(l2norm_scale(x, scale), w);
                                   },
                                   in)));
    Tensor<double> s({1}, {scale});
    auto gs = finite_diff_gradient(
        [&](const Tensor<double>& t) {
          return weighted_sum(l2norm_scale(in, t[0]), w);
        },
        s);
    record(out, "layers.l2norm.scale",
           std::abs(dscale - gs[0]) / std::max(1.0, std::abs(gs[0])));
  }
  {
    auto logits = rand_tensor({4, 3, 1}, rng, -2, 2);
    auto w = rand_tensor(logits.shape(), rng);
    auto y = softmax_map(logits);
    auto din = softmax_map_backward(y, w);
    record(out, "layers.softmax.logits",
           grad_rel_error(din, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return weighted_sum(softmax_map(x), w);
                                   },
                                   logits)));
  }
  {
    auto in = rand_tensor({3, 4, 2}, rng);
    auto w = rand_tensor({12, 16, 2}, rng);
    auto din = bilinear_upsample_backward(w, 4, 3, 4);
    record(out, "layers.upsample.input",
           grad_rel_error(din, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return weighted_sum(bilinear_upsample(x, 4), w);
                                   },
                                   in)));
  }
  {
    auto in = rand_tensor({6, 8, 2}, rng);
    auto w = rand_tensor({9, 5, 2}, rng);
    auto din = bilinear_resize_backward(w, 6, 8);
    record(out, "layers.resize.input",
           grad_rel_error(din, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return weighted_sum(bilinear_resize(x, 9, 5), w);
                                   },
                                   in)));
  }
}

inline void check_lstm(std::vector<GradCheckResult>& out) {
  Rng rng(302);
  const int n = 4, m = 3, sdim = 3;
  auto p = make_lstm_params<double>(n, m, sdim, rng);
  auto randvec = [&rng](int k) {
    std::vector<double> v(size_t(k), 0.0);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return v;
  };
  auto x = randvec(m);
  auto scene = randvec(sdim);
  LstmState<double> prev;
  prev.h = randvec(n);
  prev.c = randvec(n);
  for (auto& v : prev.h) v *= 0.8;

  auto run_plain = [&](const std::vector<double>& xx, const LstmState<double>& pp,
                       const LstmParams<double>& params) {
    auto st = lstm_step(xx, pp, params);
    double s = 0;
    for (double v : st.h) s += v;
    return s;
  };

  LstmStepCache<double> cache;
  lstm_step(x, prev, p, &cache);
  auto grads = lstm_params_like(p);
  std::vector<double> dh(size_t(n), 1.0), dc(size_t(n), 0.0);
  auto g = lstm_step_backward(p, cache, dh, dc, grads);

  Tensor<double> xt({m}, x);
  record(out, "lstm.step.x",
         grad_rel_error(Tensor<double>({m}, g.dx),
                        finite_diff_gradient(
                            [&](const Tensor<double>& t) {
                              return run_plain(t.vec(), prev, p);
                            },
                            xt)));
  Tensor<double> ht({n}, prev.h);
  record(out, "lstm.step.h_prev",
         grad_rel_error(Tensor<double>({n}, g.dh_prev),
                        finite_diff_gradient(
                            [&](const Tensor<double>& t) {
                              auto pp = prev;
                              pp.h = t.vec();
                              return run_plain(x, pp, p);
                            },
                            ht)));
  Tensor<double> ct({n}, prev.c);
  record(out, "lstm.step.c_prev",
         grad_rel_error(Tensor<double>({n}, g.dc_prev),
                        finite_diff_gradient(
                            [&](const Tensor<double>& t) {
                              auto pp = prev;
                              pp.c = t.vec();
                              return run_plain(x, pp, p);
                            },
                            ct)));
  auto flat = pack(p);
  record(out, "lstm.step.params",
         grad_rel_error(pack(grads), finite_diff_gradient(
                                         [&](const Tensor<double>& t) {
                                           auto q = p;
                                           unpack(t, q);
                                           return run_plain(x, prev, q);
                                         },
                                         flat)));

  // contextual first step, including the scene gradient
  LstmStepCache<double> ccache;
  clstm_first_step(x, scene, p, &ccache);
  auto cgrads = lstm_params_like(p);
  auto cg = lstm_step_backward(p, ccache, dh, dc, cgrads);
  Tensor<double> st({sdim}, scene);
  record(out, "lstm.clstm.scene",
         grad_rel_error(Tensor<double>({sdim}, cg.dscene),
                        finite_diff_gradient(
                            [&](const Tensor<double>& t) {
                              auto s2 = clstm_first_step(x, t.vec(), p);
                              double acc = 0;
                              for (double v : s2.h) acc += v;
                              return acc;
                            },
                            st)));
  record(out, "lstm.clstm.params",
         grad_rel_error(pack(cgrads), finite_diff_gradient(
                                          [&](const Tensor<double>& t) {
                                            auto q = p;
                                            unpack(t, q);
                                            auto s2 = clstm_first_step(x, scene, q);
                                            double acc = 0;
                                            for (double v : s2.h) acc += v;
                                            return acc;
                                          },
                                          flat)));
}

inline void check_spatial(std::vector<GradCheckResult>& out) {
  Rng rng(303);
  const int n = 6, m = 4, sdim = 3;
  auto p = make_dsclstm_params<double>(2, n, m, sdim, rng);
  auto map = rand_tensor({6, 6, m}, rng);
  std::vector<double> scene(size_t(sdim), 0.0);
  for (auto& v : scene) v = rng.uniform(-1, 1);
  auto wts = rand_tensor({6, 6, 2 * n}, rng);

  DsclstmCache<double> cache;
  dsclstm_forward(map, scene, p, &cache);
  auto grads = dsclstm_params_like(p);
  std::vector<double> dscene(size_t(sdim), 0.0);
  auto dmap = dsclstm_backward(map, scene, p, cache, wts, grads, &dscene);

  record(out, "spatial.dsclstm.input",
         grad_rel_error(dmap, finite_diff_gradient(
                                  [&](const Tensor<double>& x) {
                                    return weighted_sum(
                                        dsclstm_forward(x, scene, p), wts);
                                  },
                                  map)));
  auto flat = pack(p);
  record(out, "spatial.dsclstm.params",
         grad_rel_error(pack(grads), finite_diff_gradient(
                                         [&](const Tensor<double>& t) {
                                           auto q = p;
                                           unpack(t, q);
                                           return weighted_sum(
                                               dsclstm_forward(map, scene, q), wts);
                                         },
                                         flat)));
  Tensor<double> st({sdim}, scene);
  record(out, "spatial.dsclstm.scene",
         grad_rel_error(Tensor<double>({sdim}, dscene),
                        finite_diff_gradient(
                            [&](const Tensor<double>& t) {
                              std::vector<double> s2(t.vec());
                              return weighted_sum(dsclstm_forward(map, s2, p), wts);
                            },
                            st)));
}

inline void check_encoders(std::vector<GradCheckResult>& out) {
  Rng rng(304);
  EncoderConfig cfg;
  cfg.blocks = {{4, 3, 2, 1, 1, true},
                {4, 3, 2, 1, 1, true},
                {5, 3, 2, 1, 1, true},
                {5, 3, 1, 2, 1, true}};
  cfg.l2_scale = 7.0;
  auto p = make_encoder_params<double>(cfg, rng);
  jitter_biases(p, rng);
  auto image = rand_tensor({16, 16, 3}, rng, 0.0, 1.0);
  auto wts = rand_tensor({2, 2, 5}, rng);

  EncCache<double> cache;
  local_encode(image, cfg, p, &cache);
  auto grads = encoder_params_like(p);
  auto dimg = local_encode_backward(cfg, p, cache, wts, grads);
  record(out, "encoders.local.input",
         grad_rel_error(dimg, finite_diff_gradient(
                                  [&](const Tensor<double>& x) {
                                    return weighted_sum(local_encode(x, cfg, p), wts);
                                  },
                                  image)));
  auto flat = pack(p);
  record(out, "encoders.local.params",
         grad_rel_error(pack(grads), finite_diff_gradient(
                                         [&](const Tensor<double>& t) {
                                           auto q = p;
                                           unpack(t, q);
                                           return weighted_sum(
                                               local_encode(image, cfg, q), wts);
                                         },
                                         flat)));

  EncoderConfig ml = cfg;
  ml.multilayer = true;
  ml.tap_a = 2;
  ml.tap_b = 3;
  ml.reduce_channels = 3;
  ml.output_channels = 4;
  auto pm = make_encoder_params<double>(ml, rng);
  jitter_biases(pm, rng);
  auto wml = rand_tensor({2, 2, 4}, rng);
  EncCache<double> mlc;
  local_encode(image, ml, pm, &mlc);
  auto gml = encoder_params_like(pm);
  auto dimg_ml = local_encode_backward(ml, pm, mlc, wml, gml);
  record(out, "encoders.multilayer.input",
         grad_rel_error(dimg_ml, finite_diff_gradient(
                                     [&](const Tensor<double>& x) {
                                       return weighted_sum(local_encode(x, ml, pm),
                                                           wml);
                                     },
                                     image)));
  auto flat_ml = pack(pm);
  record(out, "encoders.multilayer.params",
         grad_rel_error(pack(gml), finite_diff_gradient(
                                       [&](const Tensor<double>& t) {
                                         auto q = pm;
                                         unpack(t, q);
                                         return weighted_sum(
                                             local_encode(image, ml, q), wml);
                                       },
                                       flat_ml)));

  SceneEncoderConfig sc;
  sc.blocks = {{4, 3, 2, 1, 1, true}, {4, 3, 2, 1, 1, true}};
  sc.fc_width = 6;
  sc.l2_scale = 3.0;
  auto ps = make_scene_params<double>(sc, rng);
  jitter_biases(ps, rng);
  auto simg = rand_tensor({12, 12, 3}, rng, 0.0, 1.0);
  std::vector<double> sw(6, 0.0);
  for (auto& v : sw) v = rng.uniform(-1, 1);
  SceneCache<double> scache;
  scene_encode(simg, sc, ps, &scache);
  auto gs = scene_params_like(ps);
  auto dsimg = scene_encode_backward(sc, ps, scache, sw, gs);
  auto scene_obj = [&](const Tensor<double>& img, const SceneParams<double>& q) {
    auto v = scene_encode(img, sc, q);
    double acc = 0;
    for (size_t i = 0; i < v.size(); ++i) acc += v[i] * sw[i];
    return acc;
  };
  record(out, "encoders.scene.input",
         grad_rel_error(dsimg, finite_diff_gradient(
                                   [&](const Tensor<double>& x) {
                                     return scene_obj(x, ps);
                                   },
                                   simg)));
  auto flat_s = pack(ps);
  record(out, "encoders.scene.params",
         grad_rel_error(pack(gs), finite_diff_gradient(
                                      [&](const Tensor<double>& t) {
                                        auto q = ps;
                                        unpack(t, q);
                                        return scene_obj(simg, q);
                                      },
                                      flat_s)));
}

inline void check_training(std::vector<GradCheckResult>& out) {
  Rng rng(305);
  auto sal = rand_tensor({6, 6, 1}, rng, 0.1, 1.0);
  std::vector<std::pair<int, int>> pts;
  for (int i = 0; i < 4; ++i)
    pts.emplace_back(rng.uniform_int(0, 5), rng.uniform_int(0, 5));
  auto fix = FixationMap::from_points(6, 6, pts);
  auto [loss, grad] = nss_loss(sal, fix);
  (void)loss;
  record(out, "training.nss_loss.map",
         grad_rel_error(grad, finite_diff_gradient(
                                  [&](const Tensor<double>& s) {
                                    return double(nss_loss(s, fix).first);
                                  },
                                  sal)));
}

// full pipeline at the 8x8 stride-8 grid: 64x64 image, N=8, depth 2, scene on
inline void check_model(std::vector<GradCheckResult>& out) {
  ModelConfig cfg;
  cfg.local.blocks = {{6, 3, 2, 1, 1, true},
                      {8, 3, 2, 1, 1, true},
                      {8, 3, 2, 1, 1, true},
                      {8, 3, 1, 2, 1, true}};
  cfg.local.l2_scale = 40.0;
  cfg.local.input_h = cfg.local.input_w = 64;
  cfg.scene.blocks = {{4, 3, 2, 1, 1, true}, {4, 3, 2, 1, 1, true}};
  cfg.scene.fc_width = 6;
  cfg.scene.l2_scale = 3.0;
  cfg.scene.input_size = 32;
  cfg.hidden = 8;
  cfg.scene_dim = 6;
  cfg.depth = 2;
  cfg.use_scene = true;

  auto params = make_model<double>(cfg, 811);
  Rng rng(306);
  // jittered biases keep relu preactivations off the kink
  for (auto& r : enumerate_params(params, cfg))
    if (!r.frozen && (r.name.find("bias") != std::string::npos ||
                      r.name.find("_b") != std::string::npos))
      for (size_t i = 0; i < r.tensor->size(); ++i)
        (*r.tensor)[i] = rng.uniform(0.01, 0.05);
  auto image = rand_tensor({64, 64, 3}, rng, 0.0, 1.0);
  std::vector<std::pair<int, int>> pts;
  for (int i = 0; i < 12; ++i)
    pts.emplace_back(rng.uniform_int(0, 63), rng.uniform_int(0, 63));
  auto fix = FixationMap::from_points(64, 64, pts);

  ModelCache<double> cache;
  auto sal = model_forward(image, cfg, params, &cache);
  auto [loss, dsal] = nss_loss(sal, fix);
  (void)loss;
  auto grads = model_params_like(params, cfg);
  auto dimage = model_backward(image, cfg, params, cache, dsal, grads);

  auto pack_refs = [&](ModelParams<double>& mp) {
    std::vector<double> flat;
    for (auto& r : enumerate_params(mp, cfg)) {
      if (r.frozen) continue;
      flat.insert(flat.end(), r.tensor->vec().begin(), r.tensor->vec().end());
    }
    const int k = int(flat.size());
    return Tensor<double>({k}, std::move(flat));
  };
  auto unpack_refs = [&](const Tensor<double>& flat, ModelParams<double>& mp) {
    size_t pos = 0;
    for (auto& r : enumerate_params(mp, cfg)) {
      if (r.frozen) continue;
      std::copy(flat.vec().begin() + long(pos),
                flat.vec().begin() + long(pos + r.tensor->size()),
                r.tensor->vec().begin());
      pos += r.tensor->size();
    }
  };

  auto flat = pack_refs(params);
  auto numeric = finite_diff_gradient(
      [&](const Tensor<double>& t) {
        auto q = params;
        unpack_refs(t, q);
        return double(nss_loss(model_forward(image, cfg, q), fix).first);
      },
      flat);
  record(out, "model.e2e.params", grad_rel_error(pack_refs(grads), numeric));

  // input pixels: a deterministic sample (per-layer checks cover the rest)
  Rng pick(307);
  double worst = 0;
  auto f_img = [&](const Tensor<double>& x) {
    return double(nss_loss(model_forward(x, cfg, params), fix).first);
  };
  Tensor<double> probe = image;
  for (int k = 0; k < 160; ++k) {
    const size_t i = size_t(pick.next_u64() % image.size());
    const double orig = probe[i];
    const double h = 1e-5;
    probe[i] = orig + h;
    const double fp = f_img(probe);
    probe[i] = orig - h;
    const double fm = f_img(probe);
    probe[i] = orig;
    const double num = (fp - fm) / (2 * h);
    worst = std::max(worst,
                     std::abs(dimage[i] - num) / std::max(1.0, std::abs(num)));
  }
  record(out, "model.e2e.input", worst);
}

}  // namespace gradsuite_detail

// module: one of all|layers|lstm|spatial|encoders|training|model
inline std::vector<GradCheckResult> run_gradient_suite(
    const std::string& module = "all") {
  using namespace gradsuite_detail;
  std::vector<GradCheckResult> out;
  const bool all = module == "all";
  if (all || module == "layers") check_layers(out);
  if (all || module == "lstm") check_lstm(out);
  if (all || module == "spatial") check_spatial(out);
  if (all || module == "encoders") check_encoders(out);
  if (all || module == "training") check_training(out);
  if (all || module == "model") check_model(out);
  if (out.empty()) throw ConfigError("gradcheck: unknown module '" + module + "'");
  return out;
}

}  // namespace dscl
