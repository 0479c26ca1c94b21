#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "convit/geometry.hpp"
#include "convit/vit.hpp"

namespace convit {

// Classical max RoI pooling. The box is mapped from image pixels to feature
// cells by dividing by `stride` (floor for min edges, ceil for max edges),
// clamped to the grid and forced to cover at least one cell. The region is
// split into out_h x out_w bins with floor/ceil boundary snapping (bins are
// never empty); each bin's value is the channelwise max over its cells.
// Pure function: not recorded on the tape (the branch consumes a frozen
// feature map, so no gradient flows upstream of the pooled region).
template <typename S>
FeatureMap<S> roi_pool(const FeatureMap<S>& fm, const BoundingBox& box, int out_h, int out_w,
                       int stride) {
  if (fm.rank() != 3) throw ShapeError("roi_pool: feature map must be [H,W,C]");
  if (out_h < 1 || out_w < 1 || stride < 1)
    throw ConfigError("roi_pool: out dims and stride must be >= 1");
  validate_box(box);
  const int H = fm.dim(0), W = fm.dim(1), C = fm.dim(2);

  // Feature-coordinate region [y0,y1) x [x0,x1).
  if (box.x_max <= 0.0 || box.y_max <= 0.0 || box.x_min >= static_cast<double>(W) * stride ||
      box.y_min >= static_cast<double>(H) * stride)
    throw BoxError("roi_pool: box lies entirely outside the feature grid");
  int y0 = static_cast<int>(std::floor(box.y_min / stride));
  int x0 = static_cast<int>(std::floor(box.x_min / stride));
  int y1 = static_cast<int>(std::ceil(box.y_max / stride));
  int x1 = static_cast<int>(std::ceil(box.x_max / stride));
  y0 = std::max(0, std::min(y0, H - 1));
  x0 = std::max(0, std::min(x0, W - 1));
  y1 = std::max(y0 + 1, std::min(y1, H));
  x1 = std::max(x0 + 1, std::min(x1, W));
  const int rh = y1 - y0, rw = x1 - x0;

  const auto& v = fm.value();
  std::vector<S> out(static_cast<std::size_t>(out_h) * out_w * C);
  for (int oy = 0; oy < out_h; ++oy) {
    const int by0 = y0 + (oy * rh) / out_h;
    int by1 = y0 + static_cast<int>(std::ceil(static_cast<double>((oy + 1) * rh) / out_h));
    by1 = std::max(by0 + 1, std::min(by1, y1));
    for (int ox = 0; ox < out_w; ++ox) {
      const int bx0 = x0 + (ox * rw) / out_w;
      int bx1 = x0 + static_cast<int>(std::ceil(static_cast<double>((ox + 1) * rw) / out_w));
      bx1 = std::max(bx0 + 1, std::min(bx1, x1));
      S* cell = out.data() + (static_cast<std::int64_t>(oy) * out_w + ox) * C;
      for (int c = 0; c < C; ++c) {
        S best = v[static_cast<std::size_t>((static_cast<std::int64_t>(by0) * W + bx0) * C + c)];
        for (int yy = by0; yy < by1; ++yy)
          for (int xx = bx0; xx < bx1; ++xx) {
            const S val =
                v[static_cast<std::size_t>((static_cast<std::int64_t>(yy) * W + xx) * C + c)];
            if (val > best) best = val;
          }
        cell[c] = best;
      }
    }
  }
  return Tensor<S>({out_h, out_w, C}, std::move(out));
}

// Branch architecture: RoI grid -> ViT-r1 (same grid) -> 2x2 avg pool ->
// ViT-r2 (half grid) -> GAP -> fc.
struct BranchConfig {
  int roi_h = 6;
  int roi_w = 4;
  ViTConfig vit_r1;
  ViTConfig vit_r2;
  int num_classes = 0;
};

inline BranchConfig toy_branch_config(int num_classes = 4, int embed_dim = 64) {
  BranchConfig cfg;
  cfg.roi_h = 6;
  cfg.roi_w = 4;
  cfg.vit_r1 = ViTConfig{2, 4, embed_dim, 4.0, 6, 4};
  cfg.vit_r2 = ViTConfig{2, 4, embed_dim, 4.0, 3, 2};
  cfg.num_classes = num_classes;
  return cfg;
}

// 10x6 -> 5x3 at 2048 channels; shape contracts only.
inline BranchConfig paper_branch_geometry(int num_classes = 40) {
  BranchConfig cfg;
  cfg.roi_h = 10;
  cfg.roi_w = 6;
  cfg.vit_r1 = ViTConfig{2, 4, 2048, 4.0, 10, 6};
  cfg.vit_r2 = ViTConfig{2, 4, 2048, 4.0, 5, 3};
  cfg.num_classes = num_classes;
  return cfg;
}

struct BranchShapeChain {
  int r1_h = 0, r1_w = 0;
  int r2_h = 0, r2_w = 0;
  int gap_dim = 0;
  int logits_dim = 0;
};

inline BranchShapeChain branch_shape_chain(const BranchConfig& cfg) {
  if (cfg.roi_h < 2 || cfg.roi_w < 2 || cfg.roi_h % 2 != 0 || cfg.roi_w % 2 != 0)
    throw ConfigError("branch: roi grid dims must be even and >= 2");
  if (cfg.num_classes < 2) throw ConfigError("branch: need at least 2 classes");
  validate_vit_config(cfg.vit_r1);
  validate_vit_config(cfg.vit_r2);
  if (cfg.vit_r1.seq_h != cfg.roi_h || cfg.vit_r1.seq_w != cfg.roi_w)
    throw ConfigError("branch: vit_r1 grid must equal the roi grid");
  if (cfg.vit_r2.seq_h != cfg.roi_h / 2 || cfg.vit_r2.seq_w != cfg.roi_w / 2)
    throw ConfigError("branch: vit_r2 grid must be the roi grid halved");
  if (cfg.vit_r1.embed_dim != cfg.vit_r2.embed_dim)
    throw ConfigError("branch: vit embed dims must match");
  BranchShapeChain sc;
  sc.r1_h = cfg.roi_h;
  sc.r1_w = cfg.roi_w;
  sc.r2_h = cfg.roi_h / 2;
  sc.r2_w = cfg.roi_w / 2;
  sc.gap_dim = cfg.vit_r1.embed_dim;
  sc.logits_dim = cfg.num_classes;
  return sc;
}

template <typename S>
struct BranchParams {
  ViTParams<S> vit_r1;
  ViTParams<S> vit_r2;
  Tensor<S> head_w;
  Tensor<S> head_b;
};

template <typename S>
BranchParams<S> init_branch_params(const BranchConfig& cfg, SplitMix64& rng) {
  const BranchShapeChain sc = branch_shape_chain(cfg);
  BranchParams<S> p;
  p.vit_r1 = init_vit_params<S>(cfg.vit_r1, rng);
  p.vit_r2 = init_vit_params<S>(cfg.vit_r2, rng);
  p.head_w = detail::xavier<S>(sc.gap_dim, cfg.num_classes, rng);
  p.head_b = Tensor<S>::zeros({cfg.num_classes});
  return p;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>>> branch_named_params(BranchParams<S>& p) {
  std::vector<std::pair<std::string, Tensor<S>>> out;
  for (auto& nt : vit_named_params(p.vit_r1, "branch.vit_r1")) out.push_back(nt);
  for (auto& nt : vit_named_params(p.vit_r2, "branch.vit_r2")) out.push_back(nt);
  out.emplace_back("branch.head.w", p.head_w);
  out.emplace_back("branch.head.b", p.head_b);
  return out;
}

// Batched branch classifier over pre-pooled person regions [P,roi_h,roi_w,C].
template <typename S>
Tensor<S> branch_logits(const FeatureMap<S>& rois, const BranchConfig& cfg,
                        const BranchParams<S>& params) {
  if (rois.rank() != 4 || rois.dim(1) != cfg.roi_h || rois.dim(2) != cfg.roi_w)
    throw ShapeError("branch: pooled regions must be [P," + std::to_string(cfg.roi_h) + "," +
                     std::to_string(cfg.roi_w) + ",C], got " + shape_str(rois.shape()));
  auto a = vit_forward(rois, cfg.vit_r1, params.vit_r1);
  auto pooled = pool2d(a, PoolKind::Avg, 2, 2);
  auto b = vit_forward(pooled, cfg.vit_r2, params.vit_r2);
  return linear(global_avg_pool(b), params.head_w, params.head_b);
}

// Single-person convenience: RoI-pool one box from a frozen [H,W,C] feature
// map and classify it. Returns a [1,num_classes] logit row.
template <typename S>
Tensor<S> human_branch_forward(const FeatureMap<S>& fm, const BoundingBox& box, int stride,
                               const BranchConfig& cfg, const BranchParams<S>& params) {
  auto roi = roi_pool(fm, box, cfg.roi_h, cfg.roi_w, stride);
  auto batch = reshape(roi, {1, cfg.roi_h, cfg.roi_w, roi.dim(2)});
  return branch_logits(batch, cfg, params);
}

}  // namespace convit
