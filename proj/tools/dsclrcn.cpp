// Operator entry point: train, predict, eval, gradcheck, synth, ablate.
// Exit codes: 0 success, 2 usage, 3 data/config error, 4 numerical failure.
// DSCL_THREADS caps the worker count (1 = fully deterministic mode).

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>

#include "dscl/ablation.hpp"
#include "dscl/gradsuite.hpp"
#include "dscl/image_io.hpp"
#include "dscl/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dscl;

namespace {

struct ResolvedTraining {
  ModelConfig model;
  TrainConfig train;
  GenConfig gen;
  int data_count = 500;
  int val_count = 100;
  uint64_t data_seed = 99;
};

ResolvedTraining training_preset(const std::string& name) {
  ResolvedTraining r;
  if (name == "toy") {
    r.train.batch_size = 20;
    r.train.base_lr_pretrained = 0.001;
    r.train.base_lr_new = 0.01;
    r.train.lr_decay_factor = 2.5;
    r.train.lr_decay_every = 50;
    r.train.total_steps = 500;
    r.train.validate_every = 50;
    r.train.seed = 7;
  } else if (name == "salicon") {
    r.train.batch_size = 20;
    r.train.base_lr_pretrained = 0.001;
    r.train.base_lr_new = 0.01;
    r.train.lr_decay_factor = 2.5;
    r.train.lr_decay_every = 500;
    r.train.total_steps = 5000;
    r.train.validate_every = 500;
    r.train.seed = 1;
  } else if (name == "mit-finetune") {
    r.train.batch_size = 20;
    r.train.base_lr_pretrained = 0.001;
    r.train.base_lr_new = 0.001;
    r.train.lr_decay_factor = 2.5;
    r.train.lr_decay_every = 100;
    r.train.total_steps = 1000;
    r.train.validate_every = 100;
    r.train.seed = 1;
    r.train.flip_augment = true;
  } else {
    throw ConfigError("unknown preset '" + name + "' (toy|salicon|mit-finetune)");
  }
  return r;
}

std::vector<std::pair<std::string, std::string>> resolved_kv(
    const ResolvedTraining& r) {
  auto kv = model_config_to_kv(r.model);
  auto add = [&kv](const std::string& k, const std::string& v) {
    kv.emplace_back(k, v);
  };
  add("train.batch_size", std::to_string(r.train.batch_size));
  add("train.base_lr_pretrained", std::to_string(r.train.base_lr_pretrained));
  add("train.base_lr_new", std::to_string(r.train.base_lr_new));
  add("train.lr_decay_factor", std::to_string(r.train.lr_decay_factor));
  add("train.lr_decay_every", std::to_string(r.train.lr_decay_every));
  add("train.total_steps", std::to_string(r.train.total_steps));
  add("train.validate_every", std::to_string(r.train.validate_every));
  add("train.momentum", std::to_string(r.train.momentum));
  add("train.weight_decay", std::to_string(r.train.weight_decay));
  add("train.seed", std::to_string(r.train.seed));
  add("train.flip_augment", r.train.flip_augment ? "1" : "0");
  add("data.count", std::to_string(r.data_count));
  add("data.val_count", std::to_string(r.val_count));
  add("data.seed", std::to_string(r.data_seed));
  add("data.mode", popout_mode_name(r.gen.mode));
  add("data.height", std::to_string(r.gen.height));
  add("data.width", std::to_string(r.gen.width));
  add("data.items", std::to_string(r.gen.items));
  add("data.fixations", std::to_string(r.gen.n_fixations));
  add("data.center_bias", std::to_string(r.gen.center_bias_weight));
  return kv;
}

void print_resolved(const ResolvedTraining& r) {
  std::cout << "# resolved configuration\n";
  for (const auto& [k, v] : resolved_kv(r)) std::cout << k << "=" << v << "\n";
}

int cmd_train(const std::string& config_path, const std::string& preset,
              const std::string& out_dir, int64_t seed_override, bool dry_run) {
  if (config_path.empty() && preset.empty()) {
    std::cerr << "train: either --config or --preset is required\n";
    return 2;
  }
  ResolvedTraining r = training_preset(preset.empty() ? "toy" : preset);
  if (!config_path.empty()) {
    KvReader kv(read_kv_file(config_path));
    r.model = model_config_from_reader(kv);
    r.train = train_config_from_reader(kv, r.train);
    r.gen = gen_config_from_reader(kv, r.gen);
    r.data_count = kv.get_int("data.count", r.data_count);
    r.val_count = kv.get_int("data.val_count", r.val_count);
    r.data_seed = kv.get_u64("data.seed", r.data_seed);
    const auto unknown = kv.unused_keys();
    if (!unknown.empty())
      throw DataError("config: unknown key '" + unknown.front() + "'");
  }
  if (seed_override >= 0) r.train.seed = uint64_t(seed_override);
  validate_model_config(r.model);
  validate_train_config(r.train);
  if (r.val_count <= 0 || r.val_count >= r.data_count)
    throw ConfigError("data.val_count must be positive and below data.count");
  r.gen.height = r.model.local.input_h;
  r.gen.width = r.model.local.input_w;
  print_resolved(r);
  if (dry_run) return 0;
  if (out_dir.empty()) {
    std::cerr << "train: --out is required\n";
    return 2;
  }

  auto full = make_synthetic_dataset<float>(r.data_count, r.gen, r.data_seed);
  Dataset<float> train_ds(full.begin(), full.end() - r.val_count);
  Dataset<float> val_ds(full.end() - r.val_count, full.end());
  std::cout << "# training on " << train_ds.size() << " samples, validating on "
            << val_ds.size() << "\n";

  auto result = train(r.model, train_ds, val_ds, r.train);
  for (const auto& row : result.history)
    std::cout << "step " << row.step << " lr " << row.lr << " loss "
              << row.train_loss << " val_nss " << row.val_nss << " val_cc "
              << row.val_cc << " val_auc " << row.val_auc << "\n";
  std::cout << "# best val_nss " << result.best_val_nss << " at step "
            << result.best_step << "\n";

  save_checkpoint(out_dir, r.model, result.best);
  std::ofstream hist(out_dir + "/history.csv");
  hist << history_csv(result.history);
  if (!hist) throw DataError("train: cannot write history.csv");
  std::cout << "# checkpoint written to " << out_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& image_path,
                const std::string& out_path, const std::string& feature_path,
                const std::string& scene_path) {
  auto [cfg, params] = load_checkpoint<float>(ckpt);
  std::cout << "# checkpoint " << ckpt << " (hidden " << cfg.hidden << ", depth "
            << cfg.depth << ", scene " << (cfg.use_scene ? "on" : "off")
            << ")\n";
  TensorF sal;
  if (!feature_path.empty()) {
    TensorF features = load_feature_map<float>(feature_path);
    std::vector<float> scene(size_t(cfg.use_scene ? cfg.scene_dim : 0), 0.0f);
    if (!scene_path.empty()) {
      auto sv = load_scene_vector<float>(scene_path);
      scene.assign(sv.vec().begin(), sv.vec().end());
    }
    TensorF up = forward_from_features(features, scene, cfg, params);
    const double sigma = predict_blur_sigma(up.dim(0), up.dim(1));
    sal = gaussian_blur(up, sigma, gaussian_kernel_size(sigma));
  } else {
    TensorF image = read_netpbm(image_path);
    if (image.dim(2) == 1 && cfg.local.in_channels == 3) {
      TensorF rgb({image.dim(0), image.dim(1), 3});
      for (int y = 0; y < image.dim(0); ++y)
        for (int x = 0; x < image.dim(1); ++x)
          for (int c = 0; c < 3; ++c) rgb.at3(y, x, c) = image.at3(y, x, 0);
      image = std::move(rgb);
    }
    std::cout << "# blur sigma " << predict_blur_sigma(image.dim(0), image.dim(1))
              << " kernel "
              << gaussian_kernel_size(predict_blur_sigma(image.dim(0), image.dim(1)))
              << "\n";
    sal = predict(image, cfg, params);
  }
  write_pgm16(out_path, sal);
  std::cout << "# saliency map written to " << out_path << "\n";
  return 0;
}

struct EvalPair {
  std::string stem;
  fs::path pred, fix;
};

std::vector<EvalPair> pair_by_stem(const std::string& pred_dir,
                                   const std::string& fix_dir) {
  auto collect = [](const std::string& dir,
                    const std::vector<std::string>& exts) {
    std::map<std::string, fs::path> stems;
    if (!fs::is_directory(dir)) throw DataError("eval: not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const std::string ext = e.path().extension().string();
      if (std::find(exts.begin(), exts.end(), ext) == exts.end()) continue;
      stems[e.path().stem().string()] = e.path();
    }
    return stems;
  };
  auto preds = collect(pred_dir, {".pgm", ".bin"});
  auto fixes = collect(fix_dir, {".csv", ".pgm"});
  std::vector<EvalPair> pairs;
  for (const auto& [stem, path] : preds) {
    auto it = fixes.find(stem);
    if (it == fixes.end())
      throw DataError("eval: no fixation file for prediction '" + stem + "'");
    pairs.push_back({stem, path, it->second});
  }
  for (const auto& [stem, path] : fixes)
    if (!preds.count(stem))
      throw DataError("eval: no prediction for fixation file '" + stem + "'");
  if (pairs.empty()) throw DataError("eval: no prediction/fixation pairs found");
  return pairs;  // map iteration is already stem-sorted
}

int cmd_eval(const std::string& pred_dir, const std::string& fix_dir,
             const std::string& metrics_csv, const std::string& out_path,
             int sauc_splits, uint64_t seed) {
  std::set<std::string> wanted;
  {
    std::istringstream is(metrics_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (tok != "nss" && tok != "cc" && tok != "auc" && tok != "sauc")
        throw DataError("eval: unknown metric '" + tok + "'");
      wanted.insert(tok);
    }
  }
  if (wanted.empty()) throw DataError("eval: no metrics selected");
  std::cout << "# metrics " << metrics_csv << " sauc_splits " << sauc_splits
            << " seed " << seed << "\n";
  auto pairs = pair_by_stem(pred_dir, fix_dir);

  std::vector<Tensor<double>> sals(pairs.size());
  std::vector<FixationMap> fixes(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    Tensor<double> sal;
    if (pairs[i].pred.extension() == ".bin")
      sal = cast_tensor<double>(load_tensor<float>(pairs[i].pred.string()));
    else
      sal = cast_tensor<double>(read_netpbm(pairs[i].pred.string()));
    if (sal.rank() != 3 || sal.dim(2) != 1)
      throw DataError("eval: prediction '" + pairs[i].stem + "' is not H x W x 1");
    if (pairs[i].fix.extension() == ".csv")
      fixes[i] = load_fixations_csv(pairs[i].fix.string(), sal.dim(0), sal.dim(1));
    else
      fixes[i] = FixationMap::from_grid(
          cast_tensor<double>(read_netpbm(pairs[i].fix.string())));
    if (fixes[i].rows != sal.dim(0) || fixes[i].cols != sal.dim(1))
      throw DataError("eval: dims mismatch for '" + pairs[i].stem + "'");
    sals[i] = std::move(sal);
  }
  if (wanted.count("sauc") && pairs.size() < 2)
    throw DataError("eval: sauc needs at least two images for negatives");

  std::vector<json> rows(pairs.size());
  parallel_for(0, int(pairs.size()), [&](int i) {
    json row;
    row["image"] = pairs[size_t(i)].stem;
    const auto& fix = fixes[size_t(i)];
    const auto& sal = sals[size_t(i)];
    if (wanted.count("nss")) row["nss"] = nss(sal, fix);
    if (wanted.count("cc"))
      row["cc"] = cc(sal, fixation_density(
                              fix, default_density_sigma(fix.rows, fix.cols)));
    if (wanted.count("auc")) row["auc"] = auc_judd(sal, fix);
    if (wanted.count("sauc")) {
      std::vector<FixationMap> others;
      for (size_t j = 0; j < pairs.size(); ++j)
        if (j != size_t(i)) others.push_back(fixes[j]);
      row["sauc"] = sauc(sal, fix, others, sauc_splits, mix_seed(seed, uint64_t(i)));
    }
    rows[size_t(i)] = std::move(row);
  });

  json aggregate;
  aggregate["aggregate"] = true;
  aggregate["n"] = pairs.size();
  for (const std::string& m : wanted) {
    double acc = 0;
    for (const auto& r : rows) acc += r.at(m).get<double>();
    aggregate[m] = acc / double(rows.size());
  }

  std::ostringstream all;
  for (const auto& r : rows) all << r.dump() << "\n";
  all << aggregate.dump() << "\n";
  std::cout << all.str();
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << all.str();
    if (!os) throw DataError("eval: cannot write " + out_path);
  }
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  std::cout << "# gradient checks, tolerance 1e-4, module " << module << "\n";
  auto results = run_gradient_suite(module);
  int fails = 0;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " rel_err "
              << r.rel_err << "\n";
    fails += !r.pass;
  }
  if (fails) {
    std::cerr << fails << " gradient check(s) above tolerance\n";
    return 4;
  }
  return 0;
}

int cmd_synth(int n, const std::string& out_dir, uint64_t seed,
              const std::string& mode, int height, int width, int items,
              int fixations) {
  GenConfig gen;
  gen.mode = popout_mode_from_string(mode);
  gen.height = height;
  gen.width = width;
  if (items > 0) gen.items = items;
  if (fixations > 0) gen.n_fixations = fixations;
  std::cout << "# synth n " << n << " seed " << seed << " mode " << mode
            << " size " << height << "x" << width << " items " << gen.items
            << " fixations " << gen.n_fixations << "\n";
  fs::create_directories(out_dir);
  for (int i = 0; i < n; ++i) {
    auto [image, fix] = generate_synthetic_sample(mix_seed(seed, uint64_t(i)), gen);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04d", i);
    write_ppm8(out_dir + "/" + std::string(name) + ".ppm", image);
    save_fixations_csv(out_dir + "/" + std::string(name) + ".csv", fix);
  }
  std::cout << "# wrote " << n << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_ablate(const std::string& axis, int seeds, const std::string& out_path,
               int steps, int train_samples, int val_samples, uint64_t data_seed) {
  AblationConfig ac;
  if (seeds > 0) ac.seeds = seeds;
  if (steps > 0) ac.total_steps = steps;
  if (train_samples > 0) ac.train_samples = train_samples;
  if (val_samples > 0) ac.val_samples = val_samples;
  ac.data_seed = data_seed;
  std::cout << "# ablate axis " << axis << " seeds " << ac.seeds << " steps "
            << ac.total_steps << " train " << ac.train_samples << " val "
            << ac.val_samples << " data_seed " << ac.data_seed << "\n";
  auto rows = run_ablation_axis(axis, ac, &std::cout);
  const std::string csv = ablation_csv(rows);
  std::cout << csv;
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << csv;
    if (!os) throw DataError("ablate: cannot write " + out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSCLRCN saliency pipeline"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train a model on synthetic data");
  std::string tr_config, tr_preset, tr_out;
  int64_t tr_seed = -1;
  bool tr_dry = false;
  train_cmd->add_option("--config", tr_config, "key=value configuration file");
  train_cmd->add_option("--preset", tr_preset, "toy|salicon|mit-finetune");
  train_cmd->add_option("--out", tr_out, "checkpoint output directory");
  train_cmd->add_option("--seed", tr_seed, "training seed override");
  train_cmd->add_flag("--dry-run", tr_dry, "print the resolved config and exit");

  auto* predict_cmd = app.add_subcommand("predict", "predict a saliency map");
  std::string pr_ckpt, pr_image, pr_out, pr_features, pr_scene;
  predict_cmd->add_option("--ckpt", pr_ckpt, "checkpoint directory")->required();
  predict_cmd->add_option("--image", pr_image, "input image (PGM/PPM)");
  predict_cmd->add_option("--out", pr_out, "output 16-bit PGM")->required();
  predict_cmd->add_option("--feature-map", pr_features,
                          "precomputed local feature map (Tensor binary)");
  predict_cmd->add_option("--scene-vector", pr_scene,
                          "precomputed scene vector (Tensor binary)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against fixations");
  std::string ev_pred, ev_fix, ev_metrics = "nss,cc,auc,sauc", ev_out;
  int ev_splits = 100;
  uint64_t ev_seed = 1;
  eval_cmd->add_option("--pred", ev_pred, "prediction directory")->required();
  eval_cmd->add_option("--fix", ev_fix, "fixation directory")->required();
  eval_cmd->add_option("--metrics", ev_metrics, "subset of nss,cc,auc,sauc");
  eval_cmd->add_option("--out", ev_out, "also write the JSON lines here");
  eval_cmd->add_option("--sauc-splits", ev_splits, "negative subsamples per image");
  eval_cmd->add_option("--seed", ev_seed, "sauc sampling seed");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::string gc_module = "all";
  grad_cmd->add_option("--module", gc_module,
                       "all|layers|lstm|spatial|encoders|training|model");

  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic samples");
  int sy_n = 0, sy_h = 64, sy_w = 64, sy_items = 0, sy_fix = 0;
  std::string sy_out, sy_mode = "color";
  uint64_t sy_seed = 1;
  synth_cmd->add_option("--n", sy_n, "sample count")->required();
  synth_cmd->add_option("--out", sy_out, "output directory")->required();
  synth_cmd->add_option("--seed", sy_seed, "generator seed");
  synth_cmd->add_option("--mode", sy_mode, "color|orientation|lone|cluster|none");
  synth_cmd->add_option("--height", sy_h, "image height");
  synth_cmd->add_option("--width", sy_w, "image width");
  synth_cmd->add_option("--items", sy_items, "items per display");
  synth_cmd->add_option("--fixations", sy_fix, "fixations per sample");

  auto* ablate_cmd = app.add_subcommand("ablate", "toy-scale ablation sweeps");
  std::string ab_axis, ab_out;
  int ab_seeds = 0, ab_steps = 0, ab_train = 0, ab_val = 0;
  uint64_t ab_data_seed = 515;
  ablate_cmd->add_option("--axis", ab_axis, "rf|depth|scene")->required();
  ablate_cmd->add_option("--seeds", ab_seeds, "model seeds per setting");
  ablate_cmd->add_option("--out", ab_out, "CSV output path");
  ablate_cmd->add_option("--steps", ab_steps, "training steps per run");
  ablate_cmd->add_option("--train-samples", ab_train, "training set size");
  ablate_cmd->add_option("--val-samples", ab_val, "held-out set size");
  ablate_cmd->add_option("--data-seed", ab_data_seed, "dataset seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    std::cout << "# threads " << thread_count() << "\n";
    if (*train_cmd)
      return cmd_train(tr_config, tr_preset, tr_out, tr_seed, tr_dry);
    if (*predict_cmd) {
      if (pr_image.empty() && pr_features.empty()) {
        std::cerr << "predict: either --image or --feature-map is required\n";
        return 2;
      }
      return cmd_predict(pr_ckpt, pr_image, pr_out, pr_features, pr_scene);
    }
    if (*eval_cmd)
      return cmd_eval(ev_pred, ev_fix, ev_metrics, ev_out, ev_splits, ev_seed);
    if (*grad_cmd) return cmd_gradcheck(gc_module);
    if (*synth_cmd)
      return cmd_synth(sy_n, sy_out, sy_seed, sy_mode, sy_h, sy_w, sy_items, sy_fix);
    if (*ablate_cmd)
      return cmd_ablate(ab_axis, ab_seeds, ab_out, ab_steps, ab_train, ab_val,
                        ab_data_seed);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
