#pragma once

#include "dscl/training.hpp"

namespace dscl {

// Toy-scale ablation axes: receptive-field size
// (conv-only models), SLSTM stack depth, and scene modulation. Reported as
// settings x {sauc, auc, nss, cc} rows averaged over model seeds on a
// held-out synthetic set.

struct AblationRow {
  std::string setting;
  double sauc = 0, auc = 0, nss = 0, cc = 0;
};

struct AblationConfig {
  int seeds = 3;
  int train_samples = 250;
  int val_samples = 60;
  int total_steps = 400;
  int lr_decay_every = 100;
  int batch_size = 10;
  int hidden = 16;
  int sauc_splits = 20;
  uint64_t data_seed = 515;
  GenConfig gen;
};

// The rf axis evaluates on cluster displays, whose fixated group centers
// are locally empty, so only receptive fields spanning the group score
// them; the context axes use the color pop-out task.
inline GenConfig ablation_gen_config(const std::string& axis, GenConfig base) {
  if (axis == "rf") {
    base.mode = PopoutMode::cluster;
    base.items = 5;
    base.center_bias_weight = 0.0;
  }
  return base;
}

inline std::vector<std::pair<std::string, ModelConfig>> ablation_settings(
    const std::string& axis, const AblationConfig& ac) {
  auto base = [&] {
    ModelConfig m;
    m.hidden = ac.hidden;
    m.use_scene = false;
    return m;
  };
  std::vector<std::pair<std::string, ModelConfig>> out;
  if (axis == "rf") {
    ModelConfig small = base();
    small.depth = 0;
    small.local = encoder_preset("rf-small");
    ModelConfig large = base();
    large.depth = 0;
    large.local = encoder_preset("rf-large");
    out.emplace_back("fcn_rf_small", small);
    out.emplace_back("fcn_rf_large", large);
  } else if (axis == "depth") {
    ModelConfig d1 = base();
    d1.depth = 1;
    ModelConfig d2 = base();
    d2.depth = 2;
    out.emplace_back("slstm_depth1", d1);
    out.emplace_back("slstm_depth2", d2);
  } else if (axis == "scene") {
    ModelConfig off = base();
    off.depth = 2;
    ModelConfig on = base();
    on.depth = 2;
    on.use_scene = true;
    on.scene_dim = on.scene.fc_width;
    out.emplace_back("dslstm", off);
    out.emplace_back("dsclstm_scene", on);
  } else {
    throw ConfigError("ablate: unknown axis '" + axis + "' (rf|depth|scene)");
  }
  return out;
}

// Trains every setting with `seeds` model seeds on a shared dataset and
// evaluates the seed-mean metrics on the held-out set. The per-image sAUC
// draws its negatives from the other held-out images' fixations.
inline std::vector<AblationRow> run_ablation_settings(
    const std::vector<std::pair<std::string, ModelConfig>>& settings,
    const GenConfig& gen, const AblationConfig& ac, std::ostream* log = nullptr) {
  auto train_ds = make_synthetic_dataset<float>(ac.train_samples, gen,
                                                mix_seed(ac.data_seed, 1));
  auto val_ds = make_synthetic_dataset<float>(ac.val_samples, gen,
                                              mix_seed(ac.data_seed, 2));

  TrainConfig tc;
  tc.batch_size = ac.batch_size;
  tc.total_steps = ac.total_steps;
  tc.lr_decay_every = ac.lr_decay_every;
  // periodic best-model selection
  tc.validate_every = std::min(ac.lr_decay_every, ac.total_steps);

  std::vector<AblationRow> rows;
  for (const auto& [name, mcfg] : settings) {
    AblationRow row;
    row.setting = name;
    for (int s = 0; s < ac.seeds; ++s) {
      TrainConfig seeded = tc;
      seeded.seed = mix_seed(ac.data_seed, uint64_t(100 + s));
      auto result = train(mcfg, train_ds, val_ds, seeded);

      double nss_acc = 0, cc_acc = 0, auc_acc = 0, sauc_acc = 0;
      std::vector<Tensor<double>> sals(val_ds.size());
      parallel_for(0, int(val_ds.size()), [&](int i) {
        sals[size_t(i)] = cast_tensor<double>(
            model_forward(val_ds[size_t(i)].image, mcfg, result.best));
      });
      for (size_t i = 0; i < val_ds.size(); ++i) {
        const auto& fix = val_ds[i].fix;
        nss_acc += nss(sals[i], fix);
        cc_acc += cc(sals[i], fixation_density(
                                  fix, default_density_sigma(fix.rows, fix.cols)));
        auc_acc += auc_judd(sals[i], fix);
        std::vector<FixationMap> others;
        for (size_t j = 0; j < val_ds.size(); ++j)
          if (j != i) others.push_back(val_ds[j].fix);
        sauc_acc += sauc(sals[i], fix, others, ac.sauc_splits,
                         mix_seed(ac.data_seed, uint64_t(i)));
      }
      const double n = double(val_ds.size());
      row.nss += nss_acc / n;
      row.cc += cc_acc / n;
      row.auc += auc_acc / n;
      row.sauc += sauc_acc / n;
      if (log)
        *log << "# " << name << " seed " << s << " nss " << (nss_acc / n)
             << "\n";
    }
    row.nss /= ac.seeds;
    row.cc /= ac.seeds;
    row.auc /= ac.seeds;
    row.sauc /= ac.seeds;
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<AblationRow> run_ablation_axis(const std::string& axis,
                                                  const AblationConfig& ac,
                                                  std::ostream* log = nullptr) {
  return run_ablation_settings(ablation_settings(axis, ac),
                               ablation_gen_config(axis, ac.gen), ac, log);
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "setting,sauc,auc,nss,cc\n";
  os.precision(6);
  for (const auto& r : rows)
    os << r.setting << "," << r.sauc << "," << r.auc << "," << r.nss << ","
       << r.cc << "\n";
  return os.str();
}

}  // namespace dscl
