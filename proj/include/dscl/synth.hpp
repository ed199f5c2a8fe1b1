#pragma once

#include "dscl/metrics.hpp"
#include "dscl/tensor.hpp"

namespace dscl {

// Visual-search stimuli: one target differing from the distractors in a
// single feature, with fixations concentrated on the target plus a
// center-bias component. Desk-scale substitute for eye-tracking data.
// cluster places the items on a ring and puts the fixations at the ring
// center: empty background locally, so only receptive fields spanning the
// group can score it (the receptive-field ablation axis).
enum class PopoutMode { color, orientation, lone, cluster, none };

inline PopoutMode popout_mode_from_string(const std::string& s) {
  if (s == "color") return PopoutMode::color;
  if (s == "orientation") return PopoutMode::orientation;
  if (s == "lone") return PopoutMode::lone;
  if (s == "cluster") return PopoutMode::cluster;
  if (s == "none") return PopoutMode::none;
  throw ConfigError("synth: unknown mode '" + s + "'");
}

inline const char* popout_mode_name(PopoutMode m) {
  switch (m) {
    case PopoutMode::color: return "color";
    case PopoutMode::orientation: return "orientation";
    case PopoutMode::lone: return "lone";
    case PopoutMode::cluster: return "cluster";
    default: return "none";
  }
}

struct GenConfig {
  int height = 64, width = 64;
  PopoutMode mode = PopoutMode::color;
  int items = 6;       // target plus distractors on a jittered grid
  int palette = 2;     // colors in play; the target/distractor pair is a
                       // random draw, so absolute color never identifies
                       // the target
  int n_fixations = 20;
  double center_bias_weight = 0.08;
  double fixation_sigma_frac = 0.04;  // of min(P,Q), around the target
  double center_sigma_frac = 0.20;    // of min(P,Q), around the image center
  double noise = 0.02;
};

namespace detail {

struct Rgb {
  float r, g, b;
};

inline void draw_bar(TensorF& img, double cy, double cx, double len,
                     double width, double angle, Rgb color) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const int rad = int(std::ceil(len / 2 + 1));
  for (int y = std::max(0, int(cy) - rad);
       y <= std::min(img.dim(0) - 1, int(cy) + rad); ++y) {
    for (int x = std::max(0, int(cx) - rad);
         x <= std::min(img.dim(1) - 1, int(cx) + rad); ++x) {
      const double dy = y - cy, dx = x - cx;
      const double u = dx * ca + dy * sa;
      const double v = -dx * sa + dy * ca;
      if (std::abs(u) <= len / 2 && std::abs(v) <= width / 2) {
        img.at3(y, x, 0) = color.r;
        img.at3(y, x, 1) = color.g;
        img.at3(y, x, 2) = color.b;
      }
    }
  }
}

}  // namespace detail

// Deterministic per seed: the same (seed, config) pair always produces the
// identical image and fixation set.
namespace detail {

// items on a ring, fixations at the empty ring center
inline std::pair<TensorF, FixationMap> generate_cluster_sample(
    uint64_t seed, const GenConfig& cfg) {
  const int h = cfg.height, w = cfg.width;
  const double mind = std::min(h, w);
  // the ring must clear both a small receptive field and the stride-8
  // interpolation tent, so bar evidence cannot leak into the center cell
  const double radius = 0.26 * mind;
  const int items = std::max(cfg.items, 3);
  if (radius < 6.0)
    throw ConfigError("synth: image too small for a cluster display");

  Rng rng(seed);
  TensorF img({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at3(y, x, c) = float(0.5 + rng.uniform(-cfg.noise, cfg.noise));

  const double margin = radius + 3.0;
  const double cy = rng.uniform(margin, h - margin);
  const double cx = rng.uniform(margin, w - margin);
  const Rgb color{0.95f, 0.15f, 0.15f};
  const double phase = rng.uniform(0.0, 2 * 3.14159265358979323846);
  for (int i = 0; i < items; ++i) {
    const double a = phase + 2 * 3.14159265358979323846 * i / items +
                     rng.uniform(-0.15, 0.15);
    const double by = cy + radius * std::sin(a);
    const double bx = cx + radius * std::cos(a);
    draw_bar(img, by, bx, 0.3 * radius, std::max(1.5, 0.1 * radius),
             rng.uniform(0.0, 3.14159265358979323846), color);
  }

  const double sig = cfg.fixation_sigma_frac * mind;
  std::vector<std::pair<int, int>> pts;
  for (int i = 0; i < cfg.n_fixations; ++i) {
    int r = 0, c = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      r = int(std::lround(rng.normal(cy, sig)));
      c = int(std::lround(rng.normal(cx, sig)));
      if (r >= 0 && r < h && c >= 0 && c < w) break;
      r = std::min(std::max(r, 0), h - 1);
      c = std::min(std::max(c, 0), w - 1);
    }
    pts.emplace_back(r, c);
  }
  return {std::move(img), FixationMap::from_points(h, w, std::move(pts))};
}

}  // namespace detail

inline std::pair<TensorF, FixationMap> generate_synthetic_sample(
    uint64_t seed, const GenConfig& cfg) {
  if (cfg.mode == PopoutMode::cluster)
    return detail::generate_cluster_sample(seed, cfg);
  const int h = cfg.height, w = cfg.width;
  const int items = cfg.mode == PopoutMode::lone ? 1 : cfg.items;
  if (items < 1) throw ConfigError("synth: need at least one item");
  const int grid = int(std::ceil(std::sqrt(double(items))));
  const double cell_h = double(h) / grid, cell_w = double(w) / grid;
  const double cell = cfg.mode == PopoutMode::lone
                          ? 0.33 * std::min(h, w)  // free placement, item-sized
                          : std::min(cell_h, cell_w);
  const double bar_len = 0.62 * cell;
  const double bar_width = std::max(1.5, 0.22 * cell);
  if (bar_len < 3.0)
    throw ConfigError("synth: image too small for the requested item count");

  Rng rng(seed);
  TensorF img({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at3(y, x, c) = float(0.5 + rng.uniform(-cfg.noise, cfg.noise));

  static const detail::Rgb palette[6] = {
      {0.95f, 0.15f, 0.15f}, {0.15f, 0.85f, 0.15f}, {0.2f, 0.3f, 0.95f},
      {0.9f, 0.85f, 0.1f},   {0.85f, 0.2f, 0.85f},  {0.1f, 0.8f, 0.85f}};
  const int colors = std::min(std::max(cfg.palette, 2), 6);
  const int ci = rng.uniform_int(0, colors - 1);
  int cj = rng.uniform_int(0, colors - 2);
  if (cj >= ci) ++cj;
  const detail::Rgb color_a = palette[ci], color_b = palette[cj];
  const double base_angle = rng.uniform(0.0, 3.14159265358979323846);

  // occupy distinct jittered grid cells
  std::vector<int> cells(size_t(grid) * grid);
  for (size_t i = 0; i < cells.size(); ++i) cells[i] = int(i);
  for (int i = 0; i < items; ++i) {
    const int j = rng.uniform_int(i, int(cells.size()) - 1);
    std::swap(cells[size_t(i)], cells[size_t(j)]);
  }

  double target_cy = h / 2.0, target_cx = w / 2.0;
  for (int i = 0; i < items; ++i) {
    const int cy_cell = cells[size_t(i)] / grid, cx_cell = cells[size_t(i)] % grid;
    double cy = (cy_cell + 0.5) * cell_h + rng.uniform(-cell_h / 6, cell_h / 6);
    double cx = (cx_cell + 0.5) * cell_w + rng.uniform(-cell_w / 6, cell_w / 6);
    if (cfg.mode == PopoutMode::lone) {
      // a lone object moves freely; a one-cell grid would pin it centrally
      const double margin = bar_len / 2 + 2;
      cy = rng.uniform(margin, h - margin);
      cx = rng.uniform(margin, w - margin);
    }
    const bool is_target = i == 0 && cfg.mode != PopoutMode::none;
    detail::Rgb color = color_a;
    double angle = base_angle;
    if (is_target && cfg.mode == PopoutMode::color) color = color_b;
    if (is_target && cfg.mode == PopoutMode::orientation)
      angle += 3.14159265358979323846 / 2;
    detail::draw_bar(img, cy, cx, bar_len, bar_width, angle, color);
    if (is_target) {
      target_cy = cy;
      target_cx = cx;
    }
  }

  const double mind = std::min(h, w);
  const double sig_t = cfg.fixation_sigma_frac * mind;
  const double sig_c = cfg.center_sigma_frac * mind;
  std::vector<std::pair<int, int>> pts;
  for (int i = 0; i < cfg.n_fixations; ++i) {
    const bool center = cfg.mode == PopoutMode::none ||
                        rng.uniform() < cfg.center_bias_weight;
    const double my = center ? h / 2.0 : target_cy;
    const double mx = center ? w / 2.0 : target_cx;
    const double sg = center ? sig_c : sig_t;
    int r = 0, c = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      r = int(std::lround(rng.normal(my, sg)));
      c = int(std::lround(rng.normal(mx, sg)));
      if (r >= 0 && r < h && c >= 0 && c < w) break;
      r = std::min(std::max(r, 0), h - 1);
      c = std::min(std::max(c, 0), w - 1);
    }
    pts.emplace_back(r, c);
  }
  return {std::move(img), FixationMap::from_points(h, w, std::move(pts))};
}

}  // namespace dscl
