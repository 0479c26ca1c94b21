#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "convit/nn.hpp"
#include "convit/ops.hpp"

namespace convit {

// Architecture hyperparameters of one Modified ViT instance. The instance is
// bound to its grid: pos_embed has one row per cell of seq_h x seq_w.
struct ViTConfig {
  int depth = 2;
  int heads = 4;
  int embed_dim = 0;
  double mlp_ratio = 4.0;
  int seq_h = 0;
  int seq_w = 0;
};

inline void validate_vit_config(const ViTConfig& cfg) {
  if (cfg.depth < 1) throw ConfigError("vit: depth must be >= 1");
  if (cfg.heads < 1) throw ConfigError("vit: heads must be >= 1");
  if (cfg.embed_dim < 1 || cfg.embed_dim % cfg.heads != 0)
    throw ConfigError("vit: embed_dim (" + std::to_string(cfg.embed_dim) +
                      ") must be positive and divisible by heads (" + std::to_string(cfg.heads) +
                      ")");
  if (cfg.mlp_ratio <= 0.0) throw ConfigError("vit: mlp_ratio must be > 0");
  if (cfg.seq_h < 1 || cfg.seq_w < 1) throw ConfigError("vit: grid dims must be >= 1");
  if (static_cast<int>(cfg.mlp_ratio * cfg.embed_dim) < 1)
    throw ConfigError("vit: mlp hidden width must be >= 1");
}

template <typename S>
struct ViTBlockParams {
  NormParams<S> ln1;
  Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  NormParams<S> ln2;
  Tensor<S> w1, b1, w2, b2;  // MLP: linear -> GELU -> linear
};

template <typename S>
struct ViTParams {
  Tensor<S> pos_embed;  // [seq_h*seq_w, embed_dim]
  std::vector<ViTBlockParams<S>> blocks;
  NormParams<S> final_ln;
};

namespace detail {

// Xavier-style normal init for a [d_in,d_out] projection.
template <typename S>
Tensor<S> xavier(int d_in, int d_out, SplitMix64& rng) {
  const double stddev = std::sqrt(2.0 / (d_in + d_out));
  return Tensor<S>::randn({d_in, d_out}, rng, stddev);
}

}  // namespace detail

template <typename S>
ViTParams<S> init_vit_params(const ViTConfig& cfg, SplitMix64& rng) {
  validate_vit_config(cfg);
  const int C = cfg.embed_dim;
  const int hidden = static_cast<int>(cfg.mlp_ratio * C);
  ViTParams<S> p;
  p.pos_embed = Tensor<S>::randn({cfg.seq_h * cfg.seq_w, C}, rng, 0.02);
  p.blocks.resize(static_cast<std::size_t>(cfg.depth));
  for (auto& b : p.blocks) {
    b.ln1 = make_layer_norm<S>(C);
    b.wq = detail::xavier<S>(C, C, rng);
    b.bq = Tensor<S>::zeros({C});
    b.wk = detail::xavier<S>(C, C, rng);
    b.bk = Tensor<S>::zeros({C});
    b.wv = detail::xavier<S>(C, C, rng);
    b.bv = Tensor<S>::zeros({C});
    b.wo = detail::xavier<S>(C, C, rng);
    b.bo = Tensor<S>::zeros({C});
    b.ln2 = make_layer_norm<S>(C);
    b.w1 = detail::xavier<S>(C, hidden, rng);
    b.b1 = Tensor<S>::zeros({hidden});
    b.w2 = detail::xavier<S>(hidden, C, rng);
    b.b2 = Tensor<S>::zeros({C});
  }
  p.final_ln = make_layer_norm<S>(C);
  return p;
}

// Stable enumeration of all learnable tensors, for the optimizer and the
// checkpoint format.
template <typename S>
std::vector<std::pair<std::string, Tensor<S>>> vit_named_params(ViTParams<S>& p,
                                                                const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor<S>>> out;
  out.emplace_back(prefix + ".pos_embed", p.pos_embed);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string bp = prefix + ".block" + std::to_string(i);
    out.emplace_back(bp + ".ln1.gamma", b.ln1.gamma);
    out.emplace_back(bp + ".ln1.beta", b.ln1.beta);
    out.emplace_back(bp + ".wq", b.wq);
    out.emplace_back(bp + ".bq", b.bq);
    out.emplace_back(bp + ".wk", b.wk);
    out.emplace_back(bp + ".bk", b.bk);
    out.emplace_back(bp + ".wv", b.wv);
    out.emplace_back(bp + ".bv", b.bv);
    out.emplace_back(bp + ".wo", b.wo);
    out.emplace_back(bp + ".bo", b.bo);
    out.emplace_back(bp + ".ln2.gamma", b.ln2.gamma);
    out.emplace_back(bp + ".ln2.beta", b.ln2.beta);
    out.emplace_back(bp + ".w1", b.w1);
    out.emplace_back(bp + ".b1", b.b1);
    out.emplace_back(bp + ".w2", b.w2);
    out.emplace_back(bp + ".b2", b.b2);
  }
  out.emplace_back(prefix + ".final_ln.gamma", p.final_ln.gamma);
  out.emplace_back(prefix + ".final_ln.beta", p.final_ln.beta);
  return out;
}

// Row-major flattening (row y, col x -> token y*W + x); a pure reshape with
// no projection and no class token.
template <typename S>
Tensor<S> tokens_from_map(const FeatureMap<S>& x) {
  if (x.rank() != 4) throw ShapeError("tokens_from_map: input must be [B,H,W,C]");
  return reshape(x, {x.dim(0), x.dim(1) * x.dim(2), x.dim(3)});
}

template <typename S>
Tensor<S> tokens_from_map(const FeatureMap<S>& x, int expect_h, int expect_w) {
  if (x.rank() != 4) throw ShapeError("tokens_from_map: input must be [B,H,W,C]");
  if (x.dim(1) != expect_h || x.dim(2) != expect_w)
    throw ShapeError("tokens_from_map: grid " + std::to_string(x.dim(1)) + "x" +
                     std::to_string(x.dim(2)) + " does not match configured " +
                     std::to_string(expect_h) + "x" + std::to_string(expect_w));
  return tokens_from_map(x);
}

// Inverse of tokens_from_map.
template <typename S>
FeatureMap<S> map_from_tokens(const Tensor<S>& t, int h, int w) {
  if (t.rank() != 3) throw ShapeError("map_from_tokens: input must be [B,N,C]");
  if (t.dim(1) != h * w)
    throw ShapeError("map_from_tokens: sequence length " + std::to_string(t.dim(1)) +
                     " != " + std::to_string(h) + "*" + std::to_string(w));
  return reshape(t, {t.dim(0), h, w, t.dim(2)});
}

// Multi-head self-attention over a [B,N,C] sequence. Per head of width
// C/heads: A = softmax(Q K^T / sqrt(C/heads)) over keys, context = A V;
// heads are concatenated and passed through the output projection.
// If attn_out is non-null it receives the attention tensor
// [B*heads, N, N] (rows sum to 1).
template <typename S>
Tensor<S> multi_head_self_attention(const Tensor<S>& t, const ViTBlockParams<S>& b, int heads,
                                    Tensor<S>* attn_out = nullptr) {
  if (t.rank() != 3) throw ShapeError("mhsa: input must be [B,N,C]");
  const int B = t.dim(0), N = t.dim(1), C = t.dim(2);
  if (heads < 1 || C % heads != 0)
    throw ConfigError("mhsa: embed dim " + std::to_string(C) + " not divisible by heads " +
                      std::to_string(heads));
  const int dh = C / heads;

  auto split = [&](const Tensor<S>& proj) {
    // [B,N,C] -> [B*heads, N, dh]
    auto r = reshape(proj, {B, N, heads, dh});
    auto pm = permute(r, {0, 2, 1, 3});
    return reshape(pm, {B * heads, N, dh});
  };

  auto q = split(linear(t, b.wq, b.bq));
  auto k = split(linear(t, b.wk, b.bk));
  auto v = split(linear(t, b.wv, b.bv));

  auto scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  auto attn = softmax(scores, 2);
  if (attn_out) *attn_out = attn;
  auto ctx = matmul(attn, v);  // [B*heads, N, dh]

  auto merged = reshape(permute(reshape(ctx, {B, heads, N, dh}), {0, 2, 1, 3}), {B, N, C});
  return linear(merged, b.wo, b.bo);
}

// Pre-norm residual block: t1 = t + MHSA(LN(t)); t2 = t1 + MLP(LN(t1)).
template <typename S>
Tensor<S> encoder_block(const Tensor<S>& t, const ViTBlockParams<S>& b, int heads,
                        Tensor<S>* attn_out = nullptr) {
  auto t1 = add(t, multi_head_self_attention(layer_norm(t, b.ln1), b, heads, attn_out));
  auto mlp = linear(gelu(linear(layer_norm(t1, b.ln2), b.w1, b.b1)), b.w2, b.b2);
  return add(t1, mlp);
}

// Full Modified ViT: tokens + pos_embed -> depth encoder blocks -> final
// layer-norm -> feature map of identical shape. No class token anywhere:
// the sequence length is exactly H*W at every layer.
template <typename S>
FeatureMap<S> vit_forward(const FeatureMap<S>& x, const ViTConfig& cfg, const ViTParams<S>& p) {
  validate_vit_config(cfg);
  if (x.rank() != 4) throw ShapeError("vit_forward: input must be [B,H,W,C]");
  if (x.dim(3) != cfg.embed_dim)
    throw ShapeError("vit_forward: channel dim " + std::to_string(x.dim(3)) +
                     " != embed_dim " + std::to_string(cfg.embed_dim));
  if (p.pos_embed.rank() != 2 || p.pos_embed.dim(0) != cfg.seq_h * cfg.seq_w ||
      p.pos_embed.dim(1) != cfg.embed_dim)
    throw ShapeError("vit_forward: pos_embed shape " + shape_str(p.pos_embed.shape()) +
                     " does not match configured grid");
  if (static_cast<int>(p.blocks.size()) != cfg.depth)
    throw ConfigError("vit_forward: params carry " + std::to_string(p.blocks.size()) +
                      " blocks, config wants " + std::to_string(cfg.depth));

  auto t = add(tokens_from_map(x, cfg.seq_h, cfg.seq_w), p.pos_embed);
  for (const auto& b : p.blocks) t = encoder_block(t, b, cfg.heads);
  t = layer_norm(t, p.final_ln);
  return map_from_tokens(t, cfg.seq_h, cfg.seq_w);
}

}  // namespace convit
