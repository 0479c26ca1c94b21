#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "convit/nn.hpp"
#include "convit/vit.hpp"

namespace convit {

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct StageSpec {
  int blocks = 1;
  int channels = 0;
};

// Miniature residual backbone: stem conv (stride 2), then stages that each
// enter with a stride-2 downsampling block. Block = two 3x3 convs with
// batch-norm + ReLU and an identity/projection skip.
struct BackboneConfig {
  int in_channels = 3;
  int stem_channels = 16;
  int stem_kernel = 3;
  int stem_stride = 2;
  std::vector<StageSpec> stages;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

struct ModelConfig {
  int input_h = 0;
  int input_w = 0;
  BackboneConfig backbone;
  ViTConfig vit_a;  // full grid
  ViTConfig vit_b;  // half grid
  int num_classes = 0;
  bool use_vits = true;      // false: identity-substitute both ViTs (CNN+GAP ablation)
  bool multi_label = false;  // score normalization for fusion: softmax vs sigmoid
  std::array<double, 3> pixel_mean{0.5, 0.5, 0.5};
  std::array<double, 3> pixel_std{0.5, 0.5, 0.5};
};

// Input 128x128, grids 8x8 -> 4x4, 64 channels.
inline ModelConfig toy_model_config(int num_classes = 4) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 128;
  cfg.backbone.stem_channels = 16;
  cfg.backbone.stages = {{1, 16}, {1, 32}, {1, 64}};
  cfg.vit_a = ViTConfig{2, 4, 64, 4.0, 8, 8};
  cfg.vit_b = ViTConfig{2, 4, 64, 4.0, 4, 4};
  cfg.num_classes = num_classes;
  return cfg;
}

// Input 448x448, grids 14x14 -> 7x7, 2048 channels. Far too large to train
// here; used for shape-chain contracts only.
inline ModelConfig paper_geometry_config(int num_classes = 40) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 448;
  cfg.backbone.stem_channels = 64;
  cfg.backbone.stem_kernel = 7;
  cfg.backbone.stages = {{1, 256}, {1, 512}, {1, 1024}, {1, 2048}};
  cfg.vit_a = ViTConfig{2, 4, 2048, 4.0, 14, 14};
  cfg.vit_b = ViTConfig{2, 4, 2048, 4.0, 7, 7};
  cfg.num_classes = num_classes;
  return cfg;
}

struct ShapeChain {
  int backbone_h = 0, backbone_w = 0, backbone_c = 0;
  int vit_a_h = 0, vit_a_w = 0;
  int pooled_h = 0, pooled_w = 0;
  int vit_b_h = 0, vit_b_w = 0;
  int gap_dim = 0;
  int logits_dim = 0;
};

// Pure arithmetic walk of the pipeline geometry; validates every invariant
// without allocating parameters (usable on the 2048-channel paper preset).
inline ShapeChain shape_chain(const ModelConfig& cfg) {
  if (cfg.input_h < 1 || cfg.input_w < 1) throw ConfigError("model: input dims must be >= 1");
  if (cfg.num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (cfg.backbone.stages.empty()) throw ConfigError("model: backbone needs stages");

  ShapeChain sc;
  int h = cfg.input_h, w = cfg.input_w;
  const int spad = cfg.backbone.stem_kernel / 2;
  h = detail::conv_out_dim(h, cfg.backbone.stem_kernel, cfg.backbone.stem_stride, spad);
  w = detail::conv_out_dim(w, cfg.backbone.stem_kernel, cfg.backbone.stem_stride, spad);
  for (const auto& st : cfg.backbone.stages) {
    if (st.blocks < 1 || st.channels < 1) throw ConfigError("model: bad stage spec");
    h = detail::conv_out_dim(h, 3, 2, 1);  // stride-2 entry block
    w = detail::conv_out_dim(w, 3, 2, 1);
    if (h < 1 || w < 1) throw ConfigError("model: backbone downsamples input away");
  }
  sc.backbone_h = h;
  sc.backbone_w = w;
  sc.backbone_c = cfg.backbone.stages.back().channels;

  validate_vit_config(cfg.vit_a);
  validate_vit_config(cfg.vit_b);
  if (cfg.vit_a.seq_h != h || cfg.vit_a.seq_w != w)
    throw ConfigError("model: vit_a grid " + std::to_string(cfg.vit_a.seq_h) + "x" +
                      std::to_string(cfg.vit_a.seq_w) + " != backbone grid " + std::to_string(h) +
                      "x" + std::to_string(w));
  if (cfg.vit_a.embed_dim != sc.backbone_c || cfg.vit_b.embed_dim != sc.backbone_c)
    throw ConfigError("model: vit embed_dim must equal backbone channels");
  if (h % 2 != 0 || w % 2 != 0)
    throw ConfigError("model: vit_a grid must have even dims for the 2x2 pool");
  sc.vit_a_h = h;
  sc.vit_a_w = w;
  sc.pooled_h = h / 2;
  sc.pooled_w = w / 2;
  if (cfg.vit_b.seq_h != sc.pooled_h || cfg.vit_b.seq_w != sc.pooled_w)
    throw ConfigError("model: vit_b grid must be vit_a grid halved");
  sc.vit_b_h = sc.pooled_h;
  sc.vit_b_w = sc.pooled_w;
  sc.gap_dim = sc.backbone_c;
  sc.logits_dim = cfg.num_classes;
  return sc;
}

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

template <typename S>
struct ConvBnParams {
  ConvParams<S> conv;
  NormParams<S> bn;
};

template <typename S>
struct ResBlockParams {
  ConvBnParams<S> c1, c2;
  bool has_proj = false;
  ConvBnParams<S> proj;  // 1x1, used when stride or channel count changes
};

template <typename S>
struct BackboneParams {
  ConvBnParams<S> stem;
  std::vector<std::vector<ResBlockParams<S>>> stages;
};

template <typename S>
struct ModelParams {
  BackboneParams<S> backbone;
  ViTParams<S> vit_a;
  ViTParams<S> vit_b;
  Tensor<S> head_w;  // [embed_dim, num_classes]
  Tensor<S> head_b;  // [num_classes]
};

namespace detail {

// He-style init for conv kernels (fan_in = kh*kw*cin).
template <typename S>
ConvParams<S> init_conv(int kh, int kw, int cin, int cout, int stride, int pad,
                        SplitMix64& rng) {
  ConvParams<S> p;
  const double stddev = std::sqrt(2.0 / (static_cast<double>(kh) * kw * cin));
  p.kernel = Tensor<S>::randn({kh, kw, cin, cout}, rng, stddev);
  p.bias = Tensor<S>::zeros({cout});
  p.stride = stride;
  p.padding = pad;
  return p;
}

template <typename S>
ConvBnParams<S> init_conv_bn(int kh, int kw, int cin, int cout, int stride, int pad,
                             const BackboneConfig& bc, SplitMix64& rng) {
  ConvBnParams<S> p;
  p.conv = init_conv<S>(kh, kw, cin, cout, stride, pad, rng);
  p.bn = make_batch_norm<S>(cout, bc.bn_momentum, bc.bn_eps);
  return p;
}

}  // namespace detail

template <typename S>
BackboneParams<S> init_backbone_params(const BackboneConfig& bc, SplitMix64& rng) {
  BackboneParams<S> p;
  const int sk = bc.stem_kernel;
  p.stem = detail::init_conv_bn<S>(sk, sk, bc.in_channels, bc.stem_channels, bc.stem_stride,
                                   sk / 2, bc, rng);
  int cin = bc.stem_channels;
  for (const auto& st : bc.stages) {
    std::vector<ResBlockParams<S>> stage;
    for (int b = 0; b < st.blocks; ++b) {
      const int stride = (b == 0) ? 2 : 1;
      ResBlockParams<S> blk;
      blk.c1 = detail::init_conv_bn<S>(3, 3, cin, st.channels, stride, 1, bc, rng);
      blk.c2 = detail::init_conv_bn<S>(3, 3, st.channels, st.channels, 1, 1, bc, rng);
      blk.has_proj = (stride != 1) || (cin != st.channels);
      if (blk.has_proj)
        blk.proj = detail::init_conv_bn<S>(1, 1, cin, st.channels, stride, 0, bc, rng);
      stage.push_back(std::move(blk));
      cin = st.channels;
    }
    p.stages.push_back(std::move(stage));
  }
  return p;
}

template <typename S>
ModelParams<S> init_model_params(const ModelConfig& cfg, SplitMix64& rng) {
  const ShapeChain sc = shape_chain(cfg);
  ModelParams<S> p;
  p.backbone = init_backbone_params<S>(cfg.backbone, rng);
  p.vit_a = init_vit_params<S>(cfg.vit_a, rng);
  p.vit_b = init_vit_params<S>(cfg.vit_b, rng);
  p.head_w = detail::xavier<S>(sc.gap_dim, cfg.num_classes, rng);
  p.head_b = Tensor<S>::zeros({cfg.num_classes});
  return p;
}

// ---------------------------------------------------------------------------
// Parameter enumeration (optimizer: trainables; checkpoint: + running stats).
// ---------------------------------------------------------------------------

template <typename S>
using NamedTensors = std::vector<std::pair<std::string, Tensor<S>>>;

namespace detail {

template <typename S>
void append_conv_bn(NamedTensors<S>& out, ConvBnParams<S>& p, const std::string& prefix,
                    bool with_running) {
  out.emplace_back(prefix + ".kernel", p.conv.kernel);
  out.emplace_back(prefix + ".bias", p.conv.bias);
  out.emplace_back(prefix + ".bn.gamma", p.bn.gamma);
  out.emplace_back(prefix + ".bn.beta", p.bn.beta);
  if (with_running) {
    out.emplace_back(prefix + ".bn.running_mean", p.bn.running_mean);
    out.emplace_back(prefix + ".bn.running_var", p.bn.running_var);
  }
}

template <typename S>
void append_backbone(NamedTensors<S>& out, BackboneParams<S>& p, const std::string& prefix,
                     bool with_running) {
  append_conv_bn(out, p.stem, prefix + ".stem", with_running);
  for (std::size_t s = 0; s < p.stages.size(); ++s)
    for (std::size_t b = 0; b < p.stages[s].size(); ++b) {
      auto& blk = p.stages[s][b];
      const std::string bp =
          prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(b);
      append_conv_bn(out, blk.c1, bp + ".c1", with_running);
      append_conv_bn(out, blk.c2, bp + ".c2", with_running);
      if (blk.has_proj) append_conv_bn(out, blk.proj, bp + ".proj", with_running);
    }
}

}  // namespace detail

// Learnable tensors in a stable order (no batch-norm running stats).
template <typename S>
NamedTensors<S> model_trainable_params(ModelParams<S>& p) {
  NamedTensors<S> out;
  detail::append_backbone(out, p.backbone, "backbone", false);
  for (auto& nt : vit_named_params(p.vit_a, "vit_a")) out.push_back(nt);
  for (auto& nt : vit_named_params(p.vit_b, "vit_b")) out.push_back(nt);
  out.emplace_back("head.w", p.head_w);
  out.emplace_back("head.b", p.head_b);
  return out;
}

// Everything the checkpoint must carry (trainables + running stats).
template <typename S>
NamedTensors<S> model_state_tensors(ModelParams<S>& p) {
  NamedTensors<S> out;
  detail::append_backbone(out, p.backbone, "backbone", true);
  for (auto& nt : vit_named_params(p.vit_a, "vit_a")) out.push_back(nt);
  for (auto& nt : vit_named_params(p.vit_b, "vit_b")) out.push_back(nt);
  out.emplace_back("head.w", p.head_w);
  out.emplace_back("head.b", p.head_b);
  return out;
}

template <typename S>
void set_backbone_mode(BackboneParams<S>& p, NormMode mode) {
  p.stem.bn.mode = mode;
  for (auto& st : p.stages)
    for (auto& blk : st) {
      blk.c1.bn.mode = mode;
      blk.c2.bn.mode = mode;
      if (blk.has_proj) blk.proj.bn.mode = mode;
    }
}

template <typename S>
void set_requires_grad(NamedTensors<S>& params, bool rg) {
  for (auto& [name, t] : params) t.set_requires_grad(rg);
}

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
FeatureMap<S> res_block_forward(const FeatureMap<S>& x, ResBlockParams<S>& blk) {
  auto h = relu(batch_norm2d(conv2d(x, blk.c1.conv), blk.c1.bn));
  h = batch_norm2d(conv2d(h, blk.c2.conv), blk.c2.bn);
  auto skip = blk.has_proj ? batch_norm2d(conv2d(x, blk.proj.conv), blk.proj.bn) : x;
  return relu(add(h, skip));
}

}  // namespace detail

// image: [B,H,W,3], already normalized with the config's pixel constants.
template <typename S>
FeatureMap<S> backbone_forward(const FeatureMap<S>& image, const ModelConfig& cfg,
                               ModelParams<S>& params) {
  if (image.rank() != 4 || image.dim(3) != cfg.backbone.in_channels)
    throw ShapeError("backbone: input must be [B,H,W," +
                     std::to_string(cfg.backbone.in_channels) + "]");
  if (image.dim(1) != cfg.input_h || image.dim(2) != cfg.input_w)
    throw ShapeError("backbone: resolution " + std::to_string(image.dim(1)) + "x" +
                     std::to_string(image.dim(2)) + " does not match configured " +
                     std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w));
  auto h = relu(batch_norm2d(conv2d(image, params.backbone.stem.conv), params.backbone.stem.bn));
  for (auto& st : params.backbone.stages)
    for (auto& blk : st) h = detail::res_block_forward(h, blk);
  return h;
}

// Intermediate feature maps of one forward pass, for introspection.
template <typename S>
struct ForwardTrace {
  FeatureMap<S> backbone_out;
  FeatureMap<S> vit_a_out;
  FeatureMap<S> pooled;
  FeatureMap<S> vit_b_out;  // Grad-CAM target ("final feature map")
  Tensor<S> gap;
  Tensor<S> logits;
};

// Full pipeline: backbone -> ViT-A -> 2x2 avg pool -> ViT-B -> GAP -> fc.
// With cfg.use_vits == false both ViTs are identity-substituted, reducing the
// model to the plain CNN+GAP ablation baseline.
template <typename S>
Tensor<S> convit_forward(const FeatureMap<S>& image, const ModelConfig& cfg,
                         ModelParams<S>& params, ForwardTrace<S>* trace = nullptr) {
  auto fm = backbone_forward(image, cfg, params);
  auto a = cfg.use_vits ? vit_forward(fm, cfg.vit_a, params.vit_a) : fm;
  auto pooled = pool2d(a, PoolKind::Avg, 2, 2);
  auto b = cfg.use_vits ? vit_forward(pooled, cfg.vit_b, params.vit_b) : pooled;
  auto gap = global_avg_pool(b);
  auto logits = linear(gap, params.head_w, params.head_b);
  if (trace) {
    trace->backbone_out = fm;
    trace->vit_a_out = a;
    trace->pooled = pooled;
    trace->vit_b_out = b;
    trace->gap = gap;
    trace->logits = logits;
  }
  return logits;
}

}  // namespace convit
