#pragma once

#include <cstring>

#include "dscl/lstm.hpp"

namespace dscl {

// Gate activations and cell states for both directions of one bidirectional
// scan; halves of the channel dim are (forward, reverse). Hidden states are
// not cached; the backward pass reads them from the scan output.
template <typename T>
struct ScanCache {
  Tensor<T> i, f, o, g, c;  // each H x W x 2N

  void reset(int h, int w, int n2) {
    i = Tensor<T>({h, w, n2});
    f = Tensor<T>({h, w, n2});
    o = Tensor<T>({h, w, n2});
    g = Tensor<T>({h, w, n2});
    c = Tensor<T>({h, w, n2});
  }
};

// Treats each row as an independent sequence and runs the shared-parameter
// LSTM pair over it left-to-right and right-to-left. Output channels
// [0..N) are the forward hidden states, [N..2N) the reverse ones. A scene
// vector, when given, enters at the first step of every scan line.
template <typename T>
Tensor<T> row_scan_bidirectional(const Tensor<T>& map, const LstmParams<T>& p,
                                 const std::vector<T>* scene = nullptr,
                                 ScanCache<T>* cache = nullptr) {
  if (map.rank() != 3) throw DimError("row_scan: rank-3 map required");
  const int h = map.dim(0), w = map.dim(1), m = map.dim(2);
  const int n = p.hidden();
  if (m != p.input_dim()) throw DimError("row_scan: channel/input dim mismatch");
  if (scene && !p.has_scene())
    throw ConfigError("row_scan: scene given but params carry no scene projections");
  if (scene && int(scene->size()) != p.scene_dim())
    throw DimError("row_scan: scene dim mismatch");
  Tensor<T> out({h, w, 2 * n});
  if (cache) cache->reset(h, w, 2 * n);

  std::vector<T> zeros(size_t(n), T(0));
  std::vector<T> gi(size_t(n), T(0)), gf(size_t(n), T(0)), go(size_t(n), T(0)), gg(size_t(n), T(0));
  std::vector<T> c_a(size_t(n), T(0)), c_b(size_t(n), T(0));
  const T* sptr = scene ? scene->data() : nullptr;

  for (int row = 0; row < h; ++row) {
    for (int dir = 0; dir < 2; ++dir) {
      const int off = dir * n;
      T* c_prev = c_a.data();
      T* c_cur = c_b.data();
      std::fill(c_a.begin(), c_a.end(), T(0));
      for (int t = 0; t < w; ++t) {
        const int q = dir == 0 ? t : w - 1 - t;
        const int q_prev = dir == 0 ? q - 1 : q + 1;
        const T* x = &map.at3(row, q, 0);
        const T* h_prev = t == 0 ? zeros.data() : &out.at3(row, q_prev, off);
        const T* cp = t == 0 ? zeros.data() : c_prev;
        detail::lstm_step_kernel(p, x, t == 0 ? sptr : nullptr, h_prev, cp,
                                 gi.data(), gf.data(), go.data(), gg.data(),
                                 c_cur, &out.at3(row, q, off));
        if (cache) {
          const size_t nb = sizeof(T) * size_t(n);
          std::memcpy(&cache->i.at3(row, q, off), gi.data(), nb);
          std::memcpy(&cache->f.at3(row, q, off), gf.data(), nb);
          std::memcpy(&cache->o.at3(row, q, off), go.data(), nb);
          std::memcpy(&cache->g.at3(row, q, off), gg.data(), nb);
          std::memcpy(&cache->c.at3(row, q, off), c_cur, nb);
        }
        std::swap(c_prev, c_cur);
      }
    }
  }
  return out;
}

// BPTT over every row and both directions. Returns dMap; parameter
// gradients from both directions accumulate into the one shared buffer,
// the scene gradient accumulates over every scan line's first step.
template <typename T>
Tensor<T> row_scan_backward(const Tensor<T>& map, const Tensor<T>& out,
                            const LstmParams<T>& p, const std::vector<T>* scene,
                            const ScanCache<T>& cache, const Tensor<T>& dout,
                            LstmParams<T>& grads, std::vector<T>* dscene) {
  const int h = map.dim(0), w = map.dim(1);
  const int n = p.hidden();
  if (!dout.same_shape(out)) throw DimError("row_scan_backward: dout shape");
  Tensor<T> dmap(map.shape());
  std::vector<T> zeros(size_t(n), T(0));
  std::vector<T> dh(size_t(n), T(0)), dc(size_t(n), T(0)), dh_next(size_t(n), T(0)), dc_next(size_t(n), T(0));
  std::vector<T> scratch(size_t(5) * n);
  const T* sptr = scene ? scene->data() : nullptr;

  for (int row = 0; row < h; ++row) {
    for (int dir = 0; dir < 2; ++dir) {
      const int off = dir * n;
      std::fill(dh_next.begin(), dh_next.end(), T(0));
      std::fill(dc_next.begin(), dc_next.end(), T(0));
      for (int t = w - 1; t >= 0; --t) {
        const int q = dir == 0 ? t : w - 1 - t;
        const int q_prev = dir == 0 ? q - 1 : q + 1;
        for (int k = 0; k < n; ++k) {
          dh[size_t(k)] = dout.at3(row, q, off + k) + dh_next[size_t(k)];
          dc[size_t(k)] = dc_next[size_t(k)];
        }
        const bool first = t == 0;
        const T* x = &map.at3(row, q, 0);
        const T* h_prev = first ? zeros.data() : &out.at3(row, q_prev, off);
        const T* c_prev = first ? zeros.data() : &cache.c.at3(row, q_prev, off);
        detail::lstm_step_backward_kernel(
            p, x, first ? sptr : nullptr, h_prev, c_prev,
            &cache.i.at3(row, q, off), &cache.f.at3(row, q, off),
            &cache.o.at3(row, q, off), &cache.g.at3(row, q, off),
            &cache.c.at3(row, q, off), dh.data(), dc.data(), grads,
            &dmap.at3(row, q, 0), dh_next.data(), dc_next.data(),
            (first && sptr && dscene) ? dscene->data() : nullptr,
            scratch.data());
      }
    }
  }
  return dmap;
}

// Column scan = row scan on the transposed map; output concat order is
// (top-to-bottom, bottom-to-top). The cache lives in transposed space.
template <typename T>
Tensor<T> column_scan_bidirectional(const Tensor<T>& map, const LstmParams<T>& p,
                                    const std::vector<T>* scene = nullptr,
                                    ScanCache<T>* cache = nullptr) {
  return transpose_hw(row_scan_bidirectional(transpose_hw(map), p, scene, cache));
}

template <typename T>
Tensor<T> column_scan_backward(const Tensor<T>& map, const Tensor<T>& out,
                               const LstmParams<T>& p, const std::vector<T>* scene,
                               const ScanCache<T>& cache, const Tensor<T>& dout,
                               LstmParams<T>& grads, std::vector<T>* dscene) {
  Tensor<T> dmap_t =
      row_scan_backward(transpose_hw(map), transpose_hw(out), p, scene, cache,
                        transpose_hw(dout), grads, dscene);
  return transpose_hw(dmap_t);
}

// ---- SLSTM -----------------------------------------------------------------

// One spatial LSTM: a horizontal BLSTM over rows followed by a vertical
// BLSTM over columns of the fused map. The pair of each BLSTM shares
// parameters.
template <typename T>
struct SlstmParams {
  LstmParams<T> horizontal;  // input dim M
  LstmParams<T> vertical;    // input dim 2N

  int hidden() const { return horizontal.hidden(); }

  template <typename F>
  void visit(F&& fn) {
    horizontal.visit([&](const char* name, Tensor<T>& t) {
      fn((std::string("h.") + name).c_str(), t);
    });
    vertical.visit([&](const char* name, Tensor<T>& t) {
      fn((std::string("v.") + name).c_str(), t);
    });
  }
};

template <typename T>
SlstmParams<T> make_slstm_params(int hidden, int input, int scene, Rng& rng) {
  SlstmParams<T> p;
  p.horizontal = make_lstm_params<T>(hidden, input, scene, rng);
  p.vertical = make_lstm_params<T>(hidden, 2 * hidden, scene, rng);
  return p;
}

template <typename T>
SlstmParams<T> slstm_params_like(const SlstmParams<T>& p) {
  SlstmParams<T> g;
  g.horizontal = lstm_params_like(p.horizontal);
  g.vertical = lstm_params_like(p.vertical);
  return g;
}

template <typename T>
struct SlstmCache {
  ScanCache<T> row, col;
  Tensor<T> h_mid;  // horizontal output, the vertical scan's input
  Tensor<T> out;
};

template <typename T>
Tensor<T> slstm_forward(const Tensor<T>& map, const SlstmParams<T>& p,
                        const std::vector<T>* scene = nullptr,
                        SlstmCache<T>* cache = nullptr) {
  if (p.vertical.input_dim() != 2 * p.hidden())
    throw ConfigError("slstm: vertical input dim must be 2N");
  Tensor<T> mid = row_scan_bidirectional(map, p.horizontal, scene,
                                         cache ? &cache->row : nullptr);
  Tensor<T> out = column_scan_bidirectional(mid, p.vertical, scene,
                                            cache ? &cache->col : nullptr);
  if (cache) {
    cache->h_mid = std::move(mid);
    cache->out = out;
  }
  return out;
}

template <typename T>
Tensor<T> slstm_backward(const Tensor<T>& map, const SlstmParams<T>& p,
                         const std::vector<T>* scene, const SlstmCache<T>& cache,
                         const Tensor<T>& dout, SlstmParams<T>& grads,
                         std::vector<T>* dscene) {
  Tensor<T> dmid = column_scan_backward(cache.h_mid, cache.out, p.vertical,
                                        scene, cache.col, dout, grads.vertical,
                                        dscene);
  return row_scan_backward(map, cache.h_mid, p.horizontal, scene, cache.row,
                           dmid, grads.horizontal, dscene);
}

// ---- DSCLSTM ---------------------------------------------------------------

// Stacked SLSTMs (depth 2 by default); the scene feature, when present,
// is injected at the first step of every directional scan of every layer
// whose inject flag is set.
template <typename T>
struct DsclstmParams {
  std::vector<SlstmParams<T>> layers;
  std::vector<uint8_t> inject;  // per layer

  int depth() const { return int(layers.size()); }
  int hidden() const { return layers.empty() ? 0 : layers.front().hidden(); }

  template <typename F>
  void visit(F&& fn) {
    for (size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      layers[l].visit([&](const char* name, Tensor<T>& t) {
        fn((prefix + name).c_str(), t);
      });
    }
  }
};

template <typename T>
DsclstmParams<T> make_dsclstm_params(int depth, int hidden, int input, int scene,
                                     Rng& rng, std::vector<uint8_t> inject = {}) {
  if (depth < 1 || depth > 4)
    throw ConfigError("dsclstm: depth must be in [1, 4]");
  DsclstmParams<T> p;
  if (inject.empty()) inject.assign(size_t(depth), uint8_t(1));
  if (int(inject.size()) != depth)
    throw ConfigError("dsclstm: inject flags must match depth");
  p.inject = std::move(inject);
  for (int l = 0; l < depth; ++l) {
    const int in_dim = l == 0 ? input : 2 * hidden;
    const int sc = (scene > 0 && p.inject[size_t(l)]) ? scene : 0;
    p.layers.push_back(make_slstm_params<T>(hidden, in_dim, sc, rng));
  }
  return p;
}

template <typename T>
DsclstmParams<T> dsclstm_params_like(const DsclstmParams<T>& p) {
  DsclstmParams<T> g;
  g.inject = p.inject;
  for (const auto& l : p.layers) g.layers.push_back(slstm_params_like(l));
  return g;
}

template <typename T>
struct DsclstmCache {
  std::vector<SlstmCache<T>> layers;
};

// Output has 2N channels and the input's spatial size; scene may be empty
// (plain DSLSTM).
template <typename T>
Tensor<T> dsclstm_forward(const Tensor<T>& map, const std::vector<T>& scene,
                          const DsclstmParams<T>& p,
                          DsclstmCache<T>* cache = nullptr) {
  if (p.layers.empty()) throw ConfigError("dsclstm: no layers");
  if (cache) cache->layers.assign(p.layers.size(), SlstmCache<T>{});
  Tensor<T> cur = map;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const std::vector<T>* s =
        (!scene.empty() && p.inject[l]) ? &scene : nullptr;
    cur = slstm_forward(cur, p.layers[l], s, cache ? &cache->layers[l] : nullptr);
  }
  return cur;
}

template <typename T>
Tensor<T> dsclstm_backward(const Tensor<T>& map, const std::vector<T>& scene,
                           const DsclstmParams<T>& p, const DsclstmCache<T>& cache,
                           const Tensor<T>& dout, DsclstmParams<T>& grads,
                           std::vector<T>* dscene) {
  Tensor<T> dcur = dout;
  for (int l = int(p.layers.size()) - 1; l >= 0; --l) {
    const std::vector<T>* s =
        (!scene.empty() && p.inject[size_t(l)]) ? &scene : nullptr;
    const Tensor<T>& input = l == 0 ? map : cache.layers[size_t(l) - 1].out;
    dcur = slstm_backward(input, p.layers[size_t(l)], s, cache.layers[size_t(l)],
                          dcur, grads.layers[size_t(l)],
                          s ? dscene : nullptr);
  }
  return dcur;
}

}  // namespace dscl
