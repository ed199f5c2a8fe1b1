#pragma once

#include "dscl/tensor.hpp"

namespace dscl {

// Gate weights of one LSTM. The scene projections (w_s*) are present only
// when the cell is used as the first step of a scene-conditioned scan.
template <typename T>
struct LstmParams {
  Tensor<T> w_xi, w_xf, w_xo, w_xg;  // N x M
  Tensor<T> w_hi, w_hf, w_ho, w_hg;  // N x N
  Tensor<T> w_si, w_sf, w_so, w_sg;  // N x S, optional
  Tensor<T> b_i, b_f, b_o, b_g;      // N

  int hidden() const { return w_hi.dim(0); }
  int input_dim() const { return w_xi.dim(1); }
  int scene_dim() const { return w_si.empty() ? 0 : w_si.dim(1); }
  bool has_scene() const { return !w_si.empty(); }

  template <typename F>
  void visit(F&& fn) {
    fn("w_xi", w_xi); fn("w_xf", w_xf); fn("w_xo", w_xo); fn("w_xg", w_xg);
    fn("w_hi", w_hi); fn("w_hf", w_hf); fn("w_ho", w_ho); fn("w_hg", w_hg);
    if (has_scene()) {
      fn("w_si", w_si); fn("w_sf", w_sf); fn("w_so", w_so); fn("w_sg", w_sg);
    }
    fn("b_i", b_i); fn("b_f", b_f); fn("b_o", b_o); fn("b_g", b_g);
  }
};

template <typename T>
struct LstmState {
  std::vector<T> h, c;

  static LstmState zero(int n) {
    LstmState s;
    s.h.assign(size_t(n), T(0));
    s.c.assign(size_t(n), T(0));
    return s;
  }
};

// Uniform [-r, r] with r = 4 sqrt(3) / sqrt(fan-in); forget bias 1 to keep
// long-term memories early in training, other biases 0. The gain keeps the
// hidden-state magnitude roughly stable across the four stacked scan
// stages; plain 1/sqrt(fan-in) shrinks activations a few-fold per stage and
// starves the saliency head of signal.
template <typename T>
LstmParams<T> make_lstm_params(int hidden, int input, int scene, Rng& rng) {
  LstmParams<T> p;
  auto mat = [&rng](int n, int m) {
    Tensor<T> t({n, m});
    const double r = 4.0 * std::sqrt(3.0) / std::sqrt(double(m));
    for (size_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(-r, r));
    return t;
  };
  p.w_xi = mat(hidden, input); p.w_xf = mat(hidden, input);
  p.w_xo = mat(hidden, input); p.w_xg = mat(hidden, input);
  p.w_hi = mat(hidden, hidden); p.w_hf = mat(hidden, hidden);
  p.w_ho = mat(hidden, hidden); p.w_hg = mat(hidden, hidden);
  if (scene > 0) {
    p.w_si = mat(hidden, scene); p.w_sf = mat(hidden, scene);
    p.w_so = mat(hidden, scene); p.w_sg = mat(hidden, scene);
  }
  p.b_i = Tensor<T>({hidden});
  p.b_f = Tensor<T>::full({hidden}, T(1));
  p.b_o = Tensor<T>({hidden});
  p.b_g = Tensor<T>({hidden});
  return p;
}

template <typename T>
LstmParams<T> lstm_params_like(const LstmParams<T>& p) {
  LstmParams<T> g;
  auto zero = [](const Tensor<T>& t) {
    return t.empty() ? Tensor<T>() : Tensor<T>(t.shape());
  };
  g.w_xi = zero(p.w_xi); g.w_xf = zero(p.w_xf); g.w_xo = zero(p.w_xo); g.w_xg = zero(p.w_xg);
  g.w_hi = zero(p.w_hi); g.w_hf = zero(p.w_hf); g.w_ho = zero(p.w_ho); g.w_hg = zero(p.w_hg);
  g.w_si = zero(p.w_si); g.w_sf = zero(p.w_sf); g.w_so = zero(p.w_so); g.w_sg = zero(p.w_sg);
  g.b_i = zero(p.b_i); g.b_f = zero(p.b_f); g.b_o = zero(p.b_o); g.b_g = zero(p.b_g);
  return g;
}

// Gate activations and states cached by the forward step, consumed by the
// backward step.
template <typename T>
struct LstmStepCache {
  std::vector<T> x, scene, h_prev, c_prev;
  std::vector<T> i, f, o, g, c;
  bool scene_step = false;
};

namespace detail {

// One transition: i,f,o = sigmoid(W_x x + W_h h + [W_s s] + b),
// g = tanh(...), c = f*c_prev + i*g, h = o*tanh(c).
// i/f/o/g/c_out/h_out are N-sized output buffers.
template <typename T>
void lstm_step_kernel(const LstmParams<T>& p, const T* x, const T* s,
                      const T* h_prev, const T* c_prev, T* gi, T* gf, T* go,
                      T* gg, T* c_out, T* h_out) {
  const int n = p.hidden(), m = p.input_dim();
  for (int k = 0; k < n; ++k) {
    gi[k] = p.b_i[size_t(k)];
    gf[k] = p.b_f[size_t(k)];
    go[k] = p.b_o[size_t(k)];
    gg[k] = p.b_g[size_t(k)];
  }
  matvec_acc(p.w_xi.data(), n, m, x, gi);
  matvec_acc(p.w_xf.data(), n, m, x, gf);
  matvec_acc(p.w_xo.data(), n, m, x, go);
  matvec_acc(p.w_xg.data(), n, m, x, gg);
  matvec_acc(p.w_hi.data(), n, n, h_prev, gi);
  matvec_acc(p.w_hf.data(), n, n, h_prev, gf);
  matvec_acc(p.w_ho.data(), n, n, h_prev, go);
  matvec_acc(p.w_hg.data(), n, n, h_prev, gg);
  if (s) {
    const int sd = p.scene_dim();
    matvec_acc(p.w_si.data(), n, sd, s, gi);
    matvec_acc(p.w_sf.data(), n, sd, s, gf);
    matvec_acc(p.w_so.data(), n, sd, s, go);
    matvec_acc(p.w_sg.data(), n, sd, s, gg);
  }
  for (int k = 0; k < n; ++k) {
    gi[k] = sigmoid_s(gi[k]);
    gf[k] = sigmoid_s(gf[k]);
    go[k] = sigmoid_s(go[k]);
    gg[k] = std::tanh(gg[k]);
    c_out[k] = gf[k] * c_prev[k] + gi[k] * gg[k];
    h_out[k] = go[k] * std::tanh(c_out[k]);
  }
}

// Reverse-mode transition. dh/dc are the incoming gradients at (h_t, c_t);
// dh_prev/dc_prev are overwritten, dx/ds accumulate, parameter gradients
// accumulate into grads. scratch must hold at least 5*N values.
template <typename T>
void lstm_step_backward_kernel(const LstmParams<T>& p, const T* x, const T* s,
                               const T* h_prev, const T* c_prev, const T* gi,
                               const T* gf, const T* go, const T* gg,
                               const T* c, const T* dh, const T* dc,
                               LstmParams<T>& grads, T* dx, T* dh_prev,
                               T* dc_prev, T* ds, T* scratch) {
  const int n = p.hidden(), m = p.input_dim();
  T* dai = scratch;
  T* daf = scratch + n;
  T* dao = scratch + 2 * n;
  T* dag = scratch + 3 * n;
  T* dct = scratch + 4 * n;
  for (int k = 0; k < n; ++k) {
    const T tc = std::tanh(c[k]);
    const T dok = dh[k] * tc;
    dct[k] = dc[k] + dh[k] * go[k] * (T(1) - tc * tc);
    dai[k] = dct[k] * gg[k] * gi[k] * (T(1) - gi[k]);
    daf[k] = dct[k] * c_prev[k] * gf[k] * (T(1) - gf[k]);
    dao[k] = dok * go[k] * (T(1) - go[k]);
    dag[k] = dct[k] * gi[k] * (T(1) - gg[k] * gg[k]);
    dc_prev[k] = dct[k] * gf[k];
    grads.b_i[size_t(k)] += dai[k];
    grads.b_f[size_t(k)] += daf[k];
    grads.b_o[size_t(k)] += dao[k];
    grads.b_g[size_t(k)] += dag[k];
  }
  outer_acc(dai, n, x, m, grads.w_xi.data());
  outer_acc(daf, n, x, m, grads.w_xf.data());
  outer_acc(dao, n, x, m, grads.w_xo.data());
  outer_acc(dag, n, x, m, grads.w_xg.data());
  outer_acc(dai, n, h_prev, n, grads.w_hi.data());
  outer_acc(daf, n, h_prev, n, grads.w_hf.data());
  outer_acc(dao, n, h_prev, n, grads.w_ho.data());
  outer_acc(dag, n, h_prev, n, grads.w_hg.data());
  if (dx) {
    matvec_t_acc(p.w_xi.data(), n, m, dai, dx);
    matvec_t_acc(p.w_xf.data(), n, m, daf, dx);
    matvec_t_acc(p.w_xo.data(), n, m, dao, dx);
    matvec_t_acc(p.w_xg.data(), n, m, dag, dx);
  }
  std::fill(dh_prev, dh_prev + n, T(0));
  matvec_t_acc(p.w_hi.data(), n, n, dai, dh_prev);
  matvec_t_acc(p.w_hf.data(), n, n, daf, dh_prev);
  matvec_t_acc(p.w_ho.data(), n, n, dao, dh_prev);
  matvec_t_acc(p.w_hg.data(), n, n, dag, dh_prev);
  if (s) {
    const int sd = p.scene_dim();
    outer_acc(dai, n, s, sd, grads.w_si.data());
    outer_acc(daf, n, s, sd, grads.w_sf.data());
    outer_acc(dao, n, s, sd, grads.w_so.data());
    outer_acc(dag, n, s, sd, grads.w_sg.data());
    if (ds) {
      matvec_t_acc(p.w_si.data(), n, sd, dai, ds);
      matvec_t_acc(p.w_sf.data(), n, sd, daf, ds);
      matvec_t_acc(p.w_so.data(), n, sd, dao, ds);
      matvec_t_acc(p.w_sg.data(), n, sd, dag, ds);
    }
  }
}

}  // namespace detail

// Plain transition, Eq.-(1)-(7) contract: (h_t, c_t) = LSTM(x_t, h_{t-1}, c_{t-1}).
template <typename T>
LstmState<T> lstm_step(const std::vector<T>& x, const LstmState<T>& prev,
                       const LstmParams<T>& p, LstmStepCache<T>* cache = nullptr) {
  const int n = p.hidden();
  if (int(x.size()) != p.input_dim())
    throw DimError("lstm_step: input dim mismatch");
  if (int(prev.h.size()) != n || int(prev.c.size()) != n)
    throw DimError("lstm_step: state dim mismatch");
  LstmState<T> out = LstmState<T>::zero(n);
  std::vector<T> gi(size_t(n), T(0)), gf(size_t(n), T(0)), go(size_t(n), T(0)), gg(size_t(n), T(0));
  detail::lstm_step_kernel(p, x.data(), static_cast<const T*>(nullptr),
                           prev.h.data(), prev.c.data(), gi.data(), gf.data(),
                           go.data(), gg.data(), out.c.data(), out.h.data());
  if (cache) {
    cache->x = x;
    cache->scene.clear();
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->o = std::move(go);
    cache->g = std::move(gg);
    cache->c = out.c;
    cache->scene_step = false;
  }
  return out;
}

// Contextual first step: zero initial state, each gate preactivation
// augmented by W_s* s. The modulation gate uses tanh, matching the plain cell.
template <typename T>
LstmState<T> clstm_first_step(const std::vector<T>& x, const std::vector<T>& scene,
                              const LstmParams<T>& p,
                              LstmStepCache<T>* cache = nullptr) {
  if (!p.has_scene())
    throw ConfigError("clstm_first_step: params carry no scene projections");
  if (int(scene.size()) != p.scene_dim())
    throw DimError("clstm_first_step: scene dim mismatch");
  if (int(x.size()) != p.input_dim())
    throw DimError("clstm_first_step: input dim mismatch");
  const int n = p.hidden();
  LstmState<T> zero = LstmState<T>::zero(n);
  LstmState<T> out = LstmState<T>::zero(n);
  std::vector<T> gi(size_t(n), T(0)), gf(size_t(n), T(0)), go(size_t(n), T(0)), gg(size_t(n), T(0));
  detail::lstm_step_kernel(p, x.data(), scene.data(), zero.h.data(),
                           zero.c.data(), gi.data(), gf.data(), go.data(),
                           gg.data(), out.c.data(), out.h.data());
  if (cache) {
    cache->x = x;
    cache->scene = scene;
    cache->h_prev = zero.h;
    cache->c_prev = zero.c;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->o = std::move(go);
    cache->g = std::move(gg);
    cache->c = out.c;
    cache->scene_step = true;
  }
  return out;
}

template <typename T>
struct LstmStepGrads {
  std::vector<T> dx, dh_prev, dc_prev, dscene;
};

// Exact reverse-mode derivatives of one cached step. Parameter gradients
// accumulate into grads (callers accumulate across time steps).
template <typename T>
LstmStepGrads<T> lstm_step_backward(const LstmParams<T>& p,
                                    const LstmStepCache<T>& cache,
                                    const std::vector<T>& dh,
                                    const std::vector<T>& dc,
                                    LstmParams<T>& grads) {
  const int n = p.hidden();
  if (cache.i.empty()) throw Error("lstm_step_backward: missing forward cache");
  if (int(dh.size()) != n || int(dc.size()) != n)
    throw DimError("lstm_step_backward: gradient dim mismatch");
  LstmStepGrads<T> out;
  out.dx.assign(cache.x.size(), T(0));
  out.dh_prev.assign(size_t(n), T(0));
  out.dc_prev.assign(size_t(n), T(0));
  if (cache.scene_step) out.dscene.assign(cache.scene.size(), T(0));
  std::vector<T> scratch(size_t(5) * n);
  detail::lstm_step_backward_kernel(
      p, cache.x.data(), cache.scene_step ? cache.scene.data() : nullptr,
      cache.h_prev.data(), cache.c_prev.data(), cache.i.data(), cache.f.data(),
      cache.o.data(), cache.g.data(), cache.c.data(), dh.data(), dc.data(),
      grads, out.dx.data(), out.dh_prev.data(), out.dc_prev.data(),
      cache.scene_step ? out.dscene.data() : nullptr, scratch.data());
  return out;
}

}  // namespace dscl
