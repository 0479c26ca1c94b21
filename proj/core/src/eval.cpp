#include "convit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "convit/augment.hpp"

namespace convit {

TensorF prepare_input(const Image& img, const ModelConfig& cfg) {
  if (img.height < cfg.input_h || img.width < cfg.input_w)
    throw ShapeError("prepare_input: image smaller than model input");
  const Image* use = &img;
  Image cropped;
  if (img.height != cfg.input_h || img.width != cfg.input_w) {
    const BoundingBox whole{0, 0, static_cast<double>(img.width),
                            static_cast<double>(img.height)};
    cropped = center_crop(img, whole, cfg.input_h, cfg.input_w).first;
    use = &cropped;
  }
  auto vals = image_to_values<float>(*use, cfg.pixel_mean, cfg.pixel_std);
  return TensorF({1, cfg.input_h, cfg.input_w, 3}, std::move(vals));
}

BoundingBox box_in_center_crop(const BoundingBox& box, int img_h, int img_w, int out_h,
                               int out_w) {
  validate_box(box);
  const double oy = (img_h - out_h) / 2, ox = (img_w - out_w) / 2;
  BoundingBox b;
  b.x_min = std::max(0.0, box.x_min - ox);
  b.y_min = std::max(0.0, box.y_min - oy);
  b.x_max = std::min(static_cast<double>(out_w), box.x_max - ox);
  b.y_max = std::min(static_cast<double>(out_h), box.y_max - oy);
  if (!(b.x_max > b.x_min) || !(b.y_max > b.y_min))
    throw BoxError("box lies entirely outside the center-crop window");
  return b;
}

std::vector<double> probabilities(const std::vector<float>& logits, bool multi_label) {
  if (logits.empty()) throw ContractError("probabilities: empty logits");
  std::vector<double> p(logits.size());
  if (multi_label) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double z = logits[i];
      p[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return p;
  }
  double m = logits[0];
  for (float z : logits) m = std::max(m, static_cast<double>(z));
  double acc = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    acc += p[i];
  }
  for (double& v : p) v /= acc;
  return p;
}

std::vector<std::vector<double>> score_images(const ModelConfig& cfg, ModelParams<float>& params,
                                              const Manifest& data) {
  const NormMode saved = params.backbone.stem.bn.mode;
  set_backbone_mode(params.backbone, NormMode::Eval);
  std::vector<std::vector<double>> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    if (s.image.empty()) throw ContractError("score_images: sample images must be decoded");
    auto logits = convit_forward(prepare_input(s.image, cfg), cfg, params);
    out.push_back(probabilities(logits.value(), cfg.multi_label));
  }
  set_backbone_mode(params.backbone, saved);
  return out;
}

std::vector<PersonRef> collect_persons(const Manifest& data) {
  std::vector<PersonRef> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    for (const auto& [box, label] : data.samples[i].persons)
      out.push_back({static_cast<int>(i), box, label});
  return out;
}

std::vector<std::vector<double>> score_persons(const ModelConfig& cfg,
                                               ModelParams<float>& params,
                                               const BranchConfig& bcfg,
                                               const BranchParams<float>& branch,
                                               const Manifest& data,
                                               const std::vector<PersonRef>& persons) {
  (void)branch_shape_chain(bcfg);  // validates branch geometry
  const ShapeChain sc = shape_chain(cfg);
  if (cfg.input_h % sc.backbone_h != 0 || cfg.input_w % sc.backbone_w != 0 ||
      cfg.input_h / sc.backbone_h != cfg.input_w / sc.backbone_w)
    throw ConfigError("score_persons: anisotropic feature stride unsupported");
  const int stride = cfg.input_h / sc.backbone_h;

  const NormMode saved = params.backbone.stem.bn.mode;
  set_backbone_mode(params.backbone, NormMode::Eval);
  std::map<int, TensorF> fm_cache;
  std::vector<std::vector<double>> out;
  out.reserve(persons.size());
  for (const auto& pr : persons) {
    auto it = fm_cache.find(pr.sample);
    if (it == fm_cache.end()) {
      const Sample& s = data.samples[static_cast<std::size_t>(pr.sample)];
      if (s.image.empty()) throw ContractError("score_persons: sample images must be decoded");
      auto fm = backbone_forward(prepare_input(s.image, cfg), cfg, params);
      it = fm_cache.emplace(pr.sample, reshape(fm, {sc.backbone_h, sc.backbone_w, sc.backbone_c}))
               .first;
    }
    const Sample& s = data.samples[static_cast<std::size_t>(pr.sample)];
    const BoundingBox box =
        box_in_center_crop(pr.box, s.image.height, s.image.width, cfg.input_h, cfg.input_w);
    auto logits = human_branch_forward(it->second, box, stride, bcfg, branch);
    out.push_back(probabilities(logits.value(), cfg.multi_label));
  }
  set_backbone_mode(params.backbone, saved);
  return out;
}

}  // namespace convit
