#pragma once

#include "dscl/metrics.hpp"
#include "dscl/model.hpp"
#include "dscl/synth.hpp"

namespace dscl {

struct TrainConfig {
  int batch_size = 20;
  double base_lr_pretrained = 0.001;
  double base_lr_new = 0.01;
  double lr_decay_factor = 2.5;
  int lr_decay_every = 500;
  int total_steps = 5000;
  int validate_every = 500;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  uint64_t seed = 1;
  bool flip_augment = false;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.batch_size < 1 || c.total_steps < 0 || c.validate_every < 1 ||
      c.lr_decay_every < 1 || c.lr_decay_factor <= 0 ||
      c.base_lr_pretrained <= 0 || c.base_lr_new <= 0 || c.momentum < 0 ||
      c.weight_decay < 0)
    throw ConfigError("train: non-positive hyperparameter");
  if (c.total_steps > 0 && c.validate_every > c.total_steps)
    throw ConfigError("train: validate_every must not exceed total_steps");
}

// base_lr(group) scaled down by the decay factor every lr_decay_every steps
inline double lr_schedule(int step, LrGroup group, const TrainConfig& c) {
  if (step < 0) throw ConfigError("lr_schedule: negative step");
  const double base =
      group == LrGroup::pretrained ? c.base_lr_pretrained : c.base_lr_new;
  return base / std::pow(c.lr_decay_factor, double(step / c.lr_decay_every));
}

// ---- negative-NSS objective --------------------------------------------------

// loss = -NSS(S, F) with population statistics; the gradient is exact,
// including the dependence of the mean and stddev on every pixel.
template <typename T>
std::pair<T, Tensor<T>> nss_loss(const Tensor<T>& sal, const FixationMap& fix) {
  if (sal.rank() != 3 || sal.dim(2) != 1)
    throw DimError("nss_loss: H x W x 1 map required");
  const int h = sal.dim(0), w = sal.dim(1);
  if (h != fix.rows || w != fix.cols)
    throw DimError("nss_loss: map/fixation grid mismatch");
  if (fix.points.empty()) throw DataError("nss_loss: empty fixation set");
  const double n = double(sal.size());
  const double npos = double(fix.points.size());
  double mean = 0;
  for (size_t i = 0; i < sal.size(); ++i) mean += double(sal[i]);
  mean /= n;
  double var = 0;
  for (size_t i = 0; i < sal.size(); ++i) {
    const double d = double(sal[i]) - mean;
    var += d * d;
  }
  var /= n;
  const double sd = std::sqrt(var);
  if (sd < 1e-12) throw NumericError("nss_loss: constant saliency map");

  double nss_val = 0;
  for (const auto& [r, c] : fix.points)
    nss_val += (double(sal.at3(r, c, 0)) - mean) / sd;
  nss_val /= npos;

  // d(-NSS)/dS_k = -[ fix_k/(P sd) - 1/(n sd) - NSS * z_k/(n sd) ]
  Tensor<T> grad(sal.shape());
  const double inv_nsd = 1.0 / (n * sd);
  for (size_t i = 0; i < sal.size(); ++i) {
    const double z = (double(sal[i]) - mean) / sd;
    grad[i] = T(inv_nsd + nss_val * z * inv_nsd);
  }
  const double inv_psd = 1.0 / (npos * sd);
  for (const auto& [r, c] : fix.points)
    grad.at3(r, c, 0) -= T(inv_psd);
  return {T(-nss_val), std::move(grad)};
}

// ---- SGD with momentum -------------------------------------------------------

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v
template <typename T>
void sgd_momentum_step(Tensor<T>& param, const Tensor<T>& grad, T lr,
                       Tensor<T>& velocity, T momentum, T weight_decay) {
  if (!param.same_shape(grad) || !param.same_shape(velocity))
    throw DimError("sgd: parameter/gradient/velocity shape mismatch");
  for (size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * param[i]);
    param[i] -= lr * velocity[i];
  }
}

// ---- datasets ------------------------------------------------------------

template <typename T>
struct Sample {
  Tensor<T> image;
  FixationMap fix;
};

template <typename T>
using Dataset = std::vector<Sample<T>>;

template <typename T>
Dataset<T> make_synthetic_dataset(int n, const GenConfig& cfg, uint64_t seed) {
  Dataset<T> ds;
  ds.resize(size_t(n));
  parallel_for(0, n, [&](int i) {
    auto [img, fix] = generate_synthetic_sample(mix_seed(seed, uint64_t(i)), cfg);
    if constexpr (std::is_same_v<T, float>)
      ds[size_t(i)] = {std::move(img), std::move(fix)};
    else
      ds[size_t(i)] = {cast_tensor<T>(img), std::move(fix)};
  });
  return ds;
}

// Doubles the set: every sample also appears mirrored, fixation columns
// mirrored accordingly.
template <typename T>
void augment_horizontal_flip(Dataset<T>& ds) {
  const size_t n = ds.size();
  ds.reserve(2 * n);
  for (size_t i = 0; i < n; ++i) {
    Sample<T> m;
    m.image = flip_lr(ds[i].image);
    std::vector<std::pair<int, int>> pts;
    for (auto [r, c] : ds[i].fix.points)
      pts.emplace_back(r, ds[i].fix.cols - 1 - c);
    m.fix = FixationMap::from_points(ds[i].fix.rows, ds[i].fix.cols, pts);
    ds.push_back(std::move(m));
  }
}

// ---- validation ----------------------------------------------------------

struct EvalScores {
  double nss = 0, cc = 0, auc = 0;
};

template <typename T>
EvalScores evaluate_model(const ModelConfig& cfg, const ModelParams<T>& params,
                          const Dataset<T>& val) {
  if (val.empty()) throw DataError("evaluate: empty validation set");
  std::vector<EvalScores> per(val.size());
  parallel_for(0, int(val.size()), [&](int i) {
    const auto& s = val[size_t(i)];
    Tensor<T> sal = model_forward(s.image, cfg, params);
    Tensor<double> sal64 = cast_tensor<double>(sal);
    per[size_t(i)].nss = nss(sal64, s.fix);
    const double sigma = default_density_sigma(s.fix.rows, s.fix.cols);
    per[size_t(i)].cc = cc(sal64, fixation_density(s.fix, sigma));
    per[size_t(i)].auc = auc_judd(sal64, s.fix);
  });
  EvalScores mean;
  for (const auto& e : per) {
    mean.nss += e.nss;
    mean.cc += e.cc;
    mean.auc += e.auc;
  }
  mean.nss /= double(per.size());
  mean.cc /= double(per.size());
  mean.auc /= double(per.size());
  return mean;
}

// Center-prior baseline: a Gaussian fitted to the pooled training fixations
// (mean and per-axis variance), evaluated as a saliency map on the val set.
template <typename T>
Tensor<double> fit_center_gaussian(const Dataset<T>& train) {
  if (train.empty()) throw DataError("baseline: empty training set");
  const int h = train.front().fix.rows, w = train.front().fix.cols;
  double mr = 0, mc = 0, n = 0;
  for (const auto& s : train)
    for (auto [r, c] : s.fix.points) {
      mr += r;
      mc += c;
      n += 1;
    }
  mr /= n;
  mc /= n;
  double vr = 0, vc = 0;
  for (const auto& s : train)
    for (auto [r, c] : s.fix.points) {
      vr += (r - mr) * (r - mr);
      vc += (c - mc) * (c - mc);
    }
  vr = std::max(vr / n, 1.0);
  vc = std::max(vc / n, 1.0);
  Tensor<double> map({h, w, 1});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      map.at3(r, c, 0) = std::exp(-0.5 * ((r - mr) * (r - mr) / vr +
                                          (c - mc) * (c - mc) / vc));
  return map;
}

template <typename T>
double baseline_nss(const Dataset<T>& train, const Dataset<T>& val) {
  Tensor<double> prior = fit_center_gaussian(train);
  double acc = 0;
  for (const auto& s : val) acc += nss(prior, s.fix);
  return acc / double(val.size());
}

// ---- training loop ---------------------------------------------------------

struct TrainRow {
  int step = 0;
  double lr = 0, train_loss = 0, val_nss = 0, val_cc = 0, val_auc = 0;
};

template <typename T>
struct TrainResult {
  ModelConfig cfg;
  ModelParams<T> best;
  std::vector<TrainRow> history;
  double best_val_nss = 0;
  int best_step = 0;
};

inline std::string history_csv(const std::vector<TrainRow>& rows) {
  std::ostringstream os;
  os << "step,lr,train_loss,val_nss,val_cc,val_auc\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.step << "," << r.lr << "," << r.train_loss << "," << r.val_nss
       << "," << r.val_cc << "," << r.val_auc << "\n";
  return os.str();
}

// Mini-batch SGD on -NSS with the decay schedule; validates every
// validate_every steps and keeps the best-validation-NSS parameters.
// Per-sample gradients go to private buffers and reduce in sample order,
// so a run is bit-reproducible for any worker count.
template <typename T>
TrainResult<T> train(const ModelConfig& cfg, Dataset<T> train_set,
                     const Dataset<T>& val_set, const TrainConfig& tc) {
  validate_train_config(tc);
  if (train_set.empty()) throw DataError("train: empty training set");
  if (tc.flip_augment) augment_horizontal_flip(train_set);

  TrainResult<T> result;
  result.cfg = cfg;
  ModelParams<T> params = make_model<T>(cfg, mix_seed(tc.seed, 0x11));
  auto refs = enumerate_params(params, cfg);

  std::vector<Tensor<T>> velocity;
  velocity.reserve(refs.size());
  for (auto& r : refs) velocity.emplace_back(r.tensor->shape());

  ModelParams<T> total_grads = model_params_like(params, cfg);
  auto total_refs = enumerate_params(total_grads, cfg);

  std::vector<ModelParams<T>> sample_grads;
  sample_grads.reserve(size_t(tc.batch_size));
  for (int b = 0; b < tc.batch_size; ++b)
    sample_grads.push_back(model_params_like(params, cfg));
  std::vector<std::vector<ParamRef<T>>> sample_refs;
  for (auto& g : sample_grads) sample_refs.push_back(enumerate_params(g, cfg));
  std::vector<T> sample_loss(size_t(tc.batch_size), T(0));

  result.best = params;
  result.best_val_nss = -1e30;
  result.best_step = 0;

  Rng shuffle_rng(mix_seed(tc.seed, 0x22));
  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  size_t cursor = order.size();  // forces an initial shuffle

  double loss_window = 0;
  int loss_count = 0;

  for (int step = 0; step < tc.total_steps; ++step) {
    std::vector<int> batch;
    batch.reserve(size_t(tc.batch_size));
    while (int(batch.size()) < tc.batch_size) {
      if (cursor >= order.size()) {
        for (size_t i = order.size(); i > 1; --i) {
          const size_t j = size_t(shuffle_rng.uniform_int(0, int(i) - 1));
          std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    try {
      parallel_for(0, tc.batch_size, [&](int b) {
        auto& grads = sample_grads[size_t(b)];
        for (auto& r : sample_refs[size_t(b)])
          std::fill(r.tensor->vec().begin(), r.tensor->vec().end(), T(0));
        const Sample<T>& s = train_set[size_t(batch[size_t(b)])];
        ModelCache<T> cache;
        Tensor<T> sal = model_forward(s.image, cfg, params, &cache);
        auto [loss, dsal] = nss_loss(sal, s.fix);
        sample_loss[size_t(b)] = loss;
        model_backward(s.image, cfg, params, cache, dsal, grads);
      });
    } catch (const NumericError& e) {
      throw NumericError("train: numerical failure at step " +
                         std::to_string(step + 1) + ": " + e.what());
    }

    double step_loss = 0;
    for (int b = 0; b < tc.batch_size; ++b) step_loss += double(sample_loss[size_t(b)]);
    step_loss /= tc.batch_size;
    if (!std::isfinite(step_loss))
      throw NumericError("train: non-finite loss at step " +
                         std::to_string(step + 1));
    loss_window += step_loss;
    ++loss_count;

    // ordered reduction, then one exclusive update
    const T inv_batch = T(1) / T(tc.batch_size);
    for (size_t t = 0; t < total_refs.size(); ++t) {
      Tensor<T>& acc = *total_refs[t].tensor;
      std::fill(acc.vec().begin(), acc.vec().end(), T(0));
      for (int b = 0; b < tc.batch_size; ++b) {
        const Tensor<T>& g = *sample_refs[size_t(b)][t].tensor;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
      }
      for (size_t i = 0; i < acc.size(); ++i) acc[i] *= inv_batch;
    }
    for (size_t t = 0; t < refs.size(); ++t) {
      if (refs[t].frozen) continue;
      const T lr = T(lr_schedule(step, refs[t].group, tc));
      sgd_momentum_step(*refs[t].tensor, *total_refs[t].tensor, lr, velocity[t],
                        T(tc.momentum), T(tc.weight_decay));
    }

    if ((step + 1) % tc.validate_every == 0 && !val_set.empty()) {
      const EvalScores scores = evaluate_model(cfg, params, val_set);
      TrainRow row;
      row.step = step + 1;
      row.lr = lr_schedule(step, LrGroup::new_layers, tc);
      row.train_loss = loss_window / std::max(loss_count, 1);
      row.val_nss = scores.nss;
      row.val_cc = scores.cc;
      row.val_auc = scores.auc;
      result.history.push_back(row);
      loss_window = 0;
      loss_count = 0;
      if (scores.nss > result.best_val_nss) {
        result.best_val_nss = scores.nss;
        result.best_step = step + 1;
        result.best = params;
      }
    }
  }
  if (result.history.empty()) result.best = params;
  return result;
}

// ---- train/gen config parsing ------------------------------------------------

inline TrainConfig train_config_from_reader(KvReader& kv, TrainConfig base = {}) {
  TrainConfig c = base;
  c.batch_size = kv.get_int("train.batch_size", c.batch_size);
  c.base_lr_pretrained = kv.get_double("train.base_lr_pretrained", c.base_lr_pretrained);
  c.base_lr_new = kv.get_double("train.base_lr_new", c.base_lr_new);
  c.lr_decay_factor = kv.get_double("train.lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_every = kv.get_int("train.lr_decay_every", c.lr_decay_every);
  c.total_steps = kv.get_int("train.total_steps", c.total_steps);
  c.validate_every = kv.get_int("train.validate_every", c.validate_every);
  c.momentum = kv.get_double("train.momentum", c.momentum);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.seed = kv.get_u64("train.seed", c.seed);
  c.flip_augment = kv.get_bool("train.flip_augment", c.flip_augment);
  validate_train_config(c);
  return c;
}

inline GenConfig gen_config_from_reader(KvReader& kv, GenConfig base = {}) {
  GenConfig g = base;
  g.height = kv.get_int("data.height", g.height);
  g.width = kv.get_int("data.width", g.width);
  g.mode = popout_mode_from_string(
      kv.get_str("data.mode", popout_mode_name(g.mode)));
  g.items = kv.get_int("data.items", g.items);
  g.n_fixations = kv.get_int("data.fixations", g.n_fixations);
  g.center_bias_weight = kv.get_double("data.center_bias", g.center_bias_weight);
  g.fixation_sigma_frac = kv.get_double("data.fixation_sigma", g.fixation_sigma_frac);
  g.center_sigma_frac = kv.get_double("data.center_sigma", g.center_sigma_frac);
  g.noise = kv.get_double("data.noise", g.noise);
  return g;
}

}  // namespace dscl
