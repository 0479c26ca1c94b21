#pragma once

#include <string>

#include "convit/model.hpp"

namespace convit {

enum class HeatmapSource { GradCam, ChannelMean };

// Nonnegative (Grad-CAM) or signed (channel-mean) spatial map at the source
// feature map's grid resolution.
template <typename S>
struct Heatmap {
  Tensor<S> values;  // [H,W]
  HeatmapSource source = HeatmapSource::GradCam;
  std::string provenance;  // which feature map produced it
};

// Per-pixel mean over channels of a single-image feature map [1,H,W,C].
// May be negative; clamping happens only at emission time.
template <typename S>
Heatmap<S> channel_mean_heatmap(const FeatureMap<S>& fm, std::string provenance = "") {
  if (fm.rank() != 4 || fm.dim(0) != 1)
    throw ShapeError("channel_mean_heatmap: expected [1,H,W,C], got " + shape_str(fm.shape()));
  const int H = fm.dim(1), W = fm.dim(2), C = fm.dim(3);
  const auto& v = fm.value();
  std::vector<S> out(static_cast<std::size_t>(H) * W, S(0));
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
    S acc = 0;
    for (int c = 0; c < C; ++c) acc += v[static_cast<std::size_t>(i * C + c)];
    out[static_cast<std::size_t>(i)] = acc / static_cast<S>(C);
  }
  Heatmap<S> h;
  h.values = Tensor<S>({H, W}, std::move(out));
  h.source = HeatmapSource::ChannelMean;
  h.provenance = std::move(provenance);
  return h;
}

// Grad-CAM weights and map for an arbitrary target feature map [1,H,W,C]
// and a scalar readout function `logit_of_map` mapping a leaf copy of the
// map to the class logit. Channel weights are the GAP of d(logit)/d(map);
// the heatmap is ReLU of the weighted channel sum.
template <typename S, class F>
Heatmap<S> grad_cam_from_map(const FeatureMap<S>& target_map, F&& logit_of_map,
                             std::string provenance) {
  if (target_map.rank() != 4 || target_map.dim(0) != 1)
    throw ShapeError("grad_cam: target map must be [1,H,W,C]");
  const int H = target_map.dim(1), W = target_map.dim(2), C = target_map.dim(3);

  // Fresh leaf so only the map -> logit segment is taped.
  Tensor<S> leaf(target_map.shape(), target_map.value(), true);
  Tape<S> tape;
  {
    TapeScope<S> scope(tape);
    Tensor<S> logit = logit_of_map(leaf);
    if (logit.numel() != 1) throw ContractError("grad_cam: readout must be scalar");
    tape.backward(logit);
  }

  const auto& g = leaf.grad();
  const auto& a = leaf.value();
  std::vector<S> weights(static_cast<std::size_t>(C), S(0));
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (std::int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < C; ++c)
      weights[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(i * C + c)];
  for (int c = 0; c < C; ++c) weights[static_cast<std::size_t>(c)] /= static_cast<S>(hw);

  std::vector<S> cam(static_cast<std::size_t>(hw), S(0));
  for (std::int64_t i = 0; i < hw; ++i) {
    S acc = 0;
    for (int c = 0; c < C; ++c)
      acc += weights[static_cast<std::size_t>(c)] * a[static_cast<std::size_t>(i * C + c)];
    cam[static_cast<std::size_t>(i)] = acc > S(0) ? acc : S(0);
  }

  Heatmap<S> h;
  h.values = Tensor<S>({H, W}, std::move(cam));
  h.source = HeatmapSource::GradCam;
  h.provenance = std::move(provenance);
  return h;
}

// Grad-CAM for the full model: target layer fixed to the ViT-B output (the
// final feature map), readout is the raw class logit through GAP + fc.
// Batch-norms are forced to eval mode for the probe and restored after.
template <typename S>
Heatmap<S> grad_cam(const ModelConfig& cfg, ModelParams<S>& params, const FeatureMap<S>& image,
                    int class_index) {
  if (class_index < 0 || class_index >= cfg.num_classes)
    throw ContractError("grad_cam: class index " + std::to_string(class_index) +
                        " out of range for " + std::to_string(cfg.num_classes) + " classes");
  if (image.rank() != 4 || image.dim(0) != 1)
    throw ShapeError("grad_cam: expected a single image [1,H,W,3]");

  const NormMode saved = params.backbone.stem.bn.mode;
  set_backbone_mode(params.backbone, NormMode::Eval);
  ForwardTrace<S> trace;
  convit_forward(image, cfg, params, &trace);  // no tape: values only
  set_backbone_mode(params.backbone, saved);

  auto readout = [&](const Tensor<S>& leaf) {
    auto logits = linear(global_avg_pool(leaf), params.head_w, params.head_b);
    return pick(logits, class_index);
  };
  return grad_cam_from_map(trace.vit_b_out, readout, "vit_b");
}

}  // namespace convit
