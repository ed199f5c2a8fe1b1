#pragma once

#include <filesystem>
#include <set>

#include "dscl/config_io.hpp"
#include "dscl/encoders.hpp"
#include "dscl/spatial_context.hpp"

namespace dscl {

// Learning-rate groups of the training protocol: the feature extractors
// follow the pretrained-layer schedule, everything downstream the new-layer
// schedule.
enum class LrGroup { pretrained, new_layers };

struct ModelConfig {
  EncoderConfig local = encoder_preset("toy");
  SceneEncoderConfig scene = scene_encoder_preset("toy");
  int hidden = 32;
  int scene_dim = 128;
  int depth = 2;  // 0 = plain FCN head directly on encoder features
  bool use_scene = true;
  std::vector<uint8_t> inject_scene;  // per layer; empty = all on
  static constexpr int stride = 8;
};

inline void validate_model_config(const ModelConfig& cfg) {
  if (cfg.hidden < 1) throw ConfigError("model: hidden size must be >= 1");
  if (cfg.depth < 0 || cfg.depth > 4)
    throw ConfigError("model: depth must be in [0, 4]");
  if (cfg.use_scene && cfg.depth == 0)
    throw ConfigError("model: scene context requires at least one slstm layer");
  if (cfg.use_scene && cfg.scene_dim != cfg.scene.fc_width)
    throw ConfigError("model: scene_dim must equal the scene encoder width");
  if (!cfg.inject_scene.empty() && int(cfg.inject_scene.size()) != cfg.depth)
    throw ConfigError("model: inject_scene flags must match depth");
  if (stride_product(cfg.local.blocks) != ModelConfig::stride)
    throw ConfigError("model: encoder stride product must be 8");
}

template <typename T>
struct ModelParams {
  EncoderParams<T> local;
  SceneParams<T> scene;   // unused when the config disables the scene branch
  DsclstmParams<T> ctx;   // empty when depth is 0
  Conv2D<T> head;         // 1x1 conv to a single logit channel
  Tensor<T> upsample_kernel;  // frozen 1-D interpolation kernel
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
  LrGroup group;
  bool frozen;
};

// Backbone stand-in convs follow the pretrained-layer rate; added dilated
// blocks, the norm scales, the scene FC, the fusion convs, the DSCLSTM,
// and the head follow the new-layer rate.
template <typename T>
std::vector<ParamRef<T>> enumerate_params(ModelParams<T>& p,
                                          const ModelConfig& cfg) {
  std::vector<char> conv_pretrained;
  for (const auto& b : cfg.local.blocks)
    for (int r = 0; r < b.repeat; ++r)
      conv_pretrained.push_back(char(b.pretrained));

  std::vector<ParamRef<T>> refs;
  size_t local_conv = 0;
  p.local.visit([&](const char* name, Tensor<T>& t) {
    const std::string n = name;
    LrGroup group = LrGroup::new_layers;
    if (n.rfind("conv", 0) == 0) {
      const size_t idx = local_conv / 2;  // kernels and bias alternate
      ++local_conv;
      if (idx < conv_pretrained.size() && conv_pretrained[idx])
        group = LrGroup::pretrained;
    }
    refs.push_back({"local." + n, &t, group, false});
  });
  if (cfg.use_scene)
    p.scene.visit([&](const char* name, Tensor<T>& t) {
      const std::string n = name;
      const LrGroup group = n.rfind("conv", 0) == 0 ? LrGroup::pretrained
                                                    : LrGroup::new_layers;
      refs.push_back({"scene." + n, &t, group, false});
    });
  if (cfg.depth > 0)
    p.ctx.visit([&](const char* name, Tensor<T>& t) {
      refs.push_back({std::string("ctx.") + name, &t, LrGroup::new_layers, false});
    });
  refs.push_back({"head.kernels", &p.head.kernels, LrGroup::new_layers, false});
  refs.push_back({"head.bias", &p.head.bias, LrGroup::new_layers, false});
  refs.push_back({"upsample.kernel", &p.upsample_kernel, LrGroup::new_layers, true});
  return refs;
}

template <typename T>
ModelParams<T> make_model(const ModelConfig& cfg, uint64_t seed) {
  validate_model_config(cfg);
  ModelParams<T> p;
  Rng enc_rng(mix_seed(seed, 1));
  p.local = make_encoder_params<T>(cfg.local, enc_rng);
  if (cfg.use_scene) {
    Rng scene_rng(mix_seed(seed, 2));
    p.scene = make_scene_params<T>(cfg.scene, scene_rng);
  }
  const int feat_channels = encoder_output_channels(cfg.local);
  if (cfg.depth > 0) {
    Rng ctx_rng(mix_seed(seed, 3));
    p.ctx = make_dsclstm_params<T>(cfg.depth, cfg.hidden, feat_channels,
                                   cfg.use_scene ? cfg.scene_dim : 0, ctx_rng,
                                   cfg.inject_scene);
  }
  Rng head_rng(mix_seed(seed, 4));
  const int head_in = cfg.depth > 0 ? 2 * cfg.hidden : feat_channels;
  p.head = make_conv<T>(1, head_in, 1, 1, 1, Activation::none, head_rng);
  // keep initial logits at unit order so the softmax competition neither
  // saturates nor flattens: hidden states sit near rms 0.25, while the
  // L2-normed feature map read by the FCN head has rms scale/sqrt(numel)
  double input_rms = 0.25;
  if (cfg.depth == 0) {
    const double numel = double(cfg.local.input_h / ModelConfig::stride) *
                         double(cfg.local.input_w / ModelConfig::stride) *
                         feat_channels;
    input_rms = cfg.local.l2_scale / std::sqrt(std::max(numel, 1.0));
  }
  for (size_t i = 0; i < p.head.kernels.size(); ++i)
    p.head.kernels[i] = T(double(p.head.kernels[i]) / input_rms);
  auto k = bilinear_kernel1d<T>(ModelConfig::stride);
  const int ks = int(k.size());
  p.upsample_kernel = Tensor<T>({ks}, std::move(k));
  return p;
}

template <typename T>
ModelParams<T> model_params_like(const ModelParams<T>& p, const ModelConfig& cfg) {
  ModelParams<T> g;
  g.local = encoder_params_like(p.local);
  if (cfg.use_scene) g.scene = scene_params_like(p.scene);
  if (cfg.depth > 0) g.ctx = dsclstm_params_like(p.ctx);
  g.head = conv_like(p.head);
  g.upsample_kernel = Tensor<T>(p.upsample_kernel.shape());
  return g;
}

template <typename T>
struct ModelCache {
  Tensor<T> scene_input;  // scene branch input (resized when configured)
  bool scene_resized = false;
  EncCache<T> enc;
  SceneCache<T> scene;
  std::vector<T> scene_vec;
  Tensor<T> features;
  DsclstmCache<T> ctx;
  Tensor<T> ctx_out;
  Tensor<T> sal_small;  // softmax output at stride-8 resolution
};

// DSCLSTM -> 1x1 conv -> softmax -> fixed bilinear upsample x8, from an
// already-extracted feature map (externally computed features plug in here).
template <typename T>
Tensor<T> forward_from_features(const Tensor<T>& features,
                                const std::vector<T>& scene,
                                const ModelConfig& cfg, const ModelParams<T>& p,
                                ModelCache<T>* cache = nullptr) {
  ModelCache<T> local_cache;
  ModelCache<T>& c = cache ? *cache : local_cache;
  if (features.rank() != 3 ||
      features.dim(2) != encoder_output_channels(cfg.local))
    throw DimError("model: feature map channels do not match the config");
  if (cfg.use_scene && int(scene.size()) != cfg.scene_dim)
    throw DimError("model: scene vector length does not match the config");
  c.ctx_out = cfg.depth > 0
                  ? dsclstm_forward(features, scene, p.ctx,
                                    cache ? &c.ctx : nullptr)
                  : features;
  Tensor<T> logits = conv2d_forward(c.ctx_out, p.head);
  c.sal_small = softmax_map(logits);
  return bilinear_upsample_with_kernel(c.sal_small, ModelConfig::stride,
                                       p.upsample_kernel.vec());
}

// encode -> DSCLSTM -> 1x1 conv -> softmax -> fixed bilinear upsample x8.
// Output is H x W x 1 at the input image resolution.
template <typename T>
Tensor<T> model_forward(const Tensor<T>& image, const ModelConfig& cfg,
                        const ModelParams<T>& p, ModelCache<T>* cache = nullptr) {
  ModelCache<T> local_cache;
  ModelCache<T>& c = cache ? *cache : local_cache;

  c.features = local_encode(image, cfg.local, p.local, cache ? &c.enc : nullptr);
  if (cfg.use_scene) {
    const int s = cfg.scene.input_size;
    c.scene_resized = s > 0 && (image.dim(0) != s || image.dim(1) != s);
    c.scene_input = c.scene_resized ? bilinear_resize(image, s, s) : image;
    c.scene_vec = scene_encode(c.scene_input, cfg.scene, p.scene,
                               cache ? &c.scene : nullptr);
  } else {
    c.scene_vec.clear();
  }
  c.ctx_out = cfg.depth > 0
                  ? dsclstm_forward(c.features, c.scene_vec, p.ctx,
                                    cache ? &c.ctx : nullptr)
                  : c.features;
  Tensor<T> logits = conv2d_forward(c.ctx_out, p.head);
  c.sal_small = softmax_map(logits);
  return bilinear_upsample_with_kernel(c.sal_small, ModelConfig::stride,
                                       p.upsample_kernel.vec());
}

// Returns dImage; parameter gradients accumulate into grads.
template <typename T>
Tensor<T> model_backward(const Tensor<T>& image, const ModelConfig& cfg,
                         const ModelParams<T>& p, const ModelCache<T>& cache,
                         const Tensor<T>& dsal, ModelParams<T>& grads) {
  Tensor<T> dsmall = bilinear_upsample_backward_with_kernel(
      dsal, ModelConfig::stride, cache.sal_small.dim(0), cache.sal_small.dim(1),
      p.upsample_kernel.vec());
  Tensor<T> dlogits = softmax_map_backward(cache.sal_small, dsmall);
  Tensor<T> dctx = conv2d_backward(cache.ctx_out, p.head, Tensor<T>(), dlogits,
                                   grads.head);
  Tensor<T> dfeat;
  std::vector<T> dscene(cache.scene_vec.size(), T(0));
  if (cfg.depth > 0) {
    dfeat = dsclstm_backward(cache.features, cache.scene_vec, p.ctx, cache.ctx,
                             dctx, grads.ctx,
                             cache.scene_vec.empty() ? nullptr : &dscene);
  } else {
    dfeat = std::move(dctx);
  }
  Tensor<T> dimage = local_encode_backward(cfg.local, p.local, cache.enc, dfeat,
                                           grads.local);
  if (cfg.use_scene) {
    Tensor<T> dscene_img = scene_encode_backward(cfg.scene, p.scene, cache.scene,
                                                 dscene, grads.scene);
    if (cache.scene_resized)
      dscene_img =
          bilinear_resize_backward(dscene_img, image.dim(0), image.dim(1));
    for (size_t i = 0; i < dimage.size(); ++i) dimage[i] += dscene_img[i];
  }
  return dimage;
}

// ---- prediction ------------------------------------------------------------

inline double predict_blur_sigma(int rows, int cols) {
  return 0.035 * double(std::min(rows, cols));
}

// Test-time pipeline: resize to the encoder input, forward, resize the map
// back, then blur with sigma = 0.035 min(P,Q) and kernel size round(4 sigma).
// The blur stays outside the differentiable graph.
template <typename T>
Tensor<T> predict(const Tensor<T>& image, const ModelConfig& cfg,
                  const ModelParams<T>& p) {
  if (image.rank() != 3 || image.dim(2) != cfg.local.in_channels)
    throw DimError("predict: image channels do not match the encoder");
  const int rows = image.dim(0), cols = image.dim(1);
  Tensor<T> resized = bilinear_resize(image, cfg.local.input_h, cfg.local.input_w);
  Tensor<T> sal = model_forward(resized, cfg, p);
  sal = bilinear_resize(sal, rows, cols);
  const double sigma = predict_blur_sigma(rows, cols);
  return gaussian_blur(sal, sigma, gaussian_kernel_size(sigma));
}

// ---- config and checkpoint serialization -----------------------------------

namespace detail {

// channels:kernel:stride:dilation:repeat:relu:pool_kernel:pool_stride:pretrained
inline std::string blocks_to_string(const std::vector<ConvBlockSpec>& blocks) {
  std::ostringstream os;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (i) os << ",";
    os << b.channels << ":" << b.kernel << ":" << b.stride << ":" << b.dilation
       << ":" << b.repeat << ":" << (b.relu ? 1 : 0) << ":" << b.pool_kernel
       << ":" << b.pool_stride << ":" << (b.pretrained ? 1 : 0);
  }
  return os.str();
}

inline std::vector<ConvBlockSpec> blocks_from_string(const std::string& text) {
  std::vector<ConvBlockSpec> blocks;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::istringstream fs(item);
    std::string f;
    std::vector<int> v;
    while (std::getline(fs, f, ':')) {
      try {
        v.push_back(std::stoi(f));
      } catch (const std::exception&) {
        throw DataError("config: malformed encoder block '" + item + "'");
      }
    }
    if (v.size() != 6 && v.size() != 8 && v.size() != 9)
      throw DataError("config: malformed encoder block '" + item + "'");
    ConvBlockSpec b;
    b.channels = v[0];
    b.kernel = v[1];
    b.stride = v[2];
    b.dilation = v[3];
    b.repeat = v[4];
    b.relu = v[5] != 0;
    if (v.size() >= 8) {
      b.pool_kernel = v[6];
      b.pool_stride = v[7];
    }
    if (v.size() == 9) b.pretrained = v[8] != 0;
    blocks.push_back(b);
  }
  if (blocks.empty()) throw DataError("config: empty encoder block list");
  return blocks;
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::string>> model_config_to_kv(
    const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("model.hidden", std::to_string(cfg.hidden));
  kv.emplace_back("model.depth", std::to_string(cfg.depth));
  kv.emplace_back("model.use_scene", cfg.use_scene ? "1" : "0");
  kv.emplace_back("model.scene_dim", std::to_string(cfg.scene_dim));
  if (!cfg.inject_scene.empty()) {
    std::string s;
    for (size_t i = 0; i < cfg.inject_scene.size(); ++i)
      s += (i ? "," : "") + std::to_string(int(cfg.inject_scene[i]));
    kv.emplace_back("model.inject_scene", s);
  }
  kv.emplace_back("encoder.blocks", detail::blocks_to_string(cfg.local.blocks));
  kv.emplace_back("encoder.l2_scale", std::to_string(cfg.local.l2_scale));
  kv.emplace_back("encoder.input_h", std::to_string(cfg.local.input_h));
  kv.emplace_back("encoder.input_w", std::to_string(cfg.local.input_w));
  if (cfg.local.multilayer) {
    kv.emplace_back("encoder.multilayer", "1");
    kv.emplace_back("encoder.tap_a", std::to_string(cfg.local.tap_a));
    kv.emplace_back("encoder.tap_b", std::to_string(cfg.local.tap_b));
    kv.emplace_back("encoder.reduce_channels",
                    std::to_string(cfg.local.reduce_channels));
    kv.emplace_back("encoder.output_channels",
                    std::to_string(cfg.local.output_channels));
  }
  kv.emplace_back("scene.blocks", detail::blocks_to_string(cfg.scene.blocks));
  kv.emplace_back("scene.fc_width", std::to_string(cfg.scene.fc_width));
  kv.emplace_back("scene.l2_scale", std::to_string(cfg.scene.l2_scale));
  kv.emplace_back("scene.input_size", std::to_string(cfg.scene.input_size));
  return kv;
}

inline ModelConfig model_config_from_reader(KvReader& kv) {
  ModelConfig cfg;
  const std::string enc_preset = kv.get_str("encoder.preset", "");
  if (!enc_preset.empty()) cfg.local = encoder_preset(enc_preset);
  if (kv.has("encoder.blocks"))
    cfg.local.blocks = detail::blocks_from_string(kv.get_str("encoder.blocks", ""));
  cfg.local.l2_scale = kv.get_double("encoder.l2_scale", cfg.local.l2_scale);
  cfg.local.input_h = kv.get_int("encoder.input_h", cfg.local.input_h);
  cfg.local.input_w = kv.get_int("encoder.input_w", cfg.local.input_w);
  cfg.local.multilayer = kv.get_bool("encoder.multilayer", cfg.local.multilayer);
  cfg.local.tap_a = kv.get_int("encoder.tap_a", cfg.local.tap_a);
  cfg.local.tap_b = kv.get_int("encoder.tap_b", cfg.local.tap_b);
  cfg.local.reduce_channels =
      kv.get_int("encoder.reduce_channels", cfg.local.reduce_channels);
  cfg.local.output_channels =
      kv.get_int("encoder.output_channels", cfg.local.output_channels);

  const std::string scene_preset = kv.get_str("scene.preset", "");
  if (!scene_preset.empty()) cfg.scene = scene_encoder_preset(scene_preset);
  if (kv.has("scene.blocks"))
    cfg.scene.blocks = detail::blocks_from_string(kv.get_str("scene.blocks", ""));
  cfg.scene.fc_width = kv.get_int("scene.fc_width", cfg.scene.fc_width);
  cfg.scene.l2_scale = kv.get_double("scene.l2_scale", cfg.scene.l2_scale);
  cfg.scene.input_size = kv.get_int("scene.input_size", cfg.scene.input_size);

  cfg.hidden = kv.get_int("model.hidden", cfg.hidden);
  cfg.depth = kv.get_int("model.depth", cfg.depth);
  cfg.use_scene = kv.get_bool("model.use_scene", cfg.use_scene);
  cfg.scene_dim = kv.get_int("model.scene_dim", cfg.scene.fc_width);
  const std::string inject = kv.get_str("model.inject_scene", "");
  if (!inject.empty()) {
    cfg.inject_scene.clear();
    std::istringstream is(inject);
    std::string tok;
    while (std::getline(is, tok, ','))
      cfg.inject_scene.push_back(uint8_t(tok == "1"));
  }
  validate_model_config(cfg);
  return cfg;
}

// Checkpoint: config.txt + manifest.txt (name, file, shape per line) +
// one Tensor binary per parameter.
template <typename T>
void save_checkpoint(const std::string& dir, const ModelConfig& cfg,
                     const ModelParams<T>& params) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_kv_file(dir + "/config.txt", model_config_to_kv(cfg));
  auto refs = enumerate_params(const_cast<ModelParams<T>&>(params), cfg);
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw DataError("checkpoint: cannot write manifest in " + dir);
  for (const auto& r : refs) {
    const std::string file = r.name + ".bin";
    save_tensor(dir + "/" + file, *r.tensor);
    manifest << r.name << "\t" << file << "\t";
    for (int i = 0; i < r.tensor->rank(); ++i)
      manifest << (i ? "x" : "") << r.tensor->dim(i);
    manifest << "\n";
  }
  if (!manifest) throw DataError("checkpoint: manifest write failed in " + dir);
}

template <typename T>
std::pair<ModelConfig, ModelParams<T>> load_checkpoint(const std::string& dir) {
  KvReader kv(read_kv_file(dir + "/config.txt"));
  ModelConfig cfg = model_config_from_reader(kv);
  ModelParams<T> params = make_model<T>(cfg, 0);
  auto refs = enumerate_params(params, cfg);

  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw DataError("checkpoint: missing manifest in " + dir);
  std::map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name, file, shape;
    if (!(is >> name >> file >> shape))
      throw DataError("checkpoint: malformed manifest line '" + line + "'");
    files[name] = file;
  }
  std::set<std::string> expected;
  for (auto& r : refs) {
    expected.insert(r.name);
    auto it = files.find(r.name);
    if (it == files.end())
      throw DataError("checkpoint: missing tensor " + r.name);
    Tensor<T> t = load_tensor<T>(dir + "/" + it->second);
    if (t.shape() != r.tensor->shape())
      throw DataError("checkpoint: shape mismatch for " + r.name +
                      " (model " + r.tensor->shape_str() + ", file " +
                      t.shape_str() + ")");
    *r.tensor = std::move(t);
  }
  for (const auto& [name, _] : files)
    if (!expected.count(name))
      throw DataError("checkpoint: unexpected tensor " + name);
  return {cfg, std::move(params)};
}

}  // namespace dscl
