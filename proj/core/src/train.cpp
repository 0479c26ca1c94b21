#include "convit/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "convit/augment.hpp"
#include "convit/eval.hpp"
#include "convit/format.hpp"

namespace convit {

namespace {

// Stream tags for derived PRNGs; sample streams use the raw dataset index
// (< 2^32), so tags live above 2^32 and can never collide with one.
constexpr std::uint64_t kShuffleTag = 0xA1000000'00000001ULL;
constexpr std::uint64_t kMixTag = 0xA2000000'00000000ULL;

void seeded_shuffle(std::vector<int>& order, SplitMix64& rng) {
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_int(static_cast<int>(i)))]);
}

void emit_epoch(std::vector<EpochLog>& logs, std::ostream* log, int epoch, double lr,
                double loss_v) {
  logs.push_back({epoch, lr, loss_v});
  if (log)
    *log << "epoch " << epoch << " lr " << fmt_double(lr) << " loss " << fmt_double(loss_v)
         << '\n';
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.base_lr > 0)) throw ConfigError("train: base_lr must be > 0");
  if (!(cfg.lr_decay_factor > 0)) throw ConfigError("train: lr_decay_factor must be > 0");
  if (cfg.lr_decay_every < 1) throw ConfigError("train: lr_decay_every must be >= 1");
  if (cfg.momentum < 0) throw ConfigError("train: momentum must be >= 0");
  if (cfg.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (cfg.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(cfg.mixup_alpha > 0)) throw ConfigError("train: mixup_alpha must be > 0");
  if (!(cfg.crop_keep_fraction > 0) || cfg.crop_keep_fraction > 1)
    throw ConfigError("train: crop_keep_fraction must lie in (0, 1]");
  if (cfg.flip_prob < 0 || cfg.flip_prob > 1)
    throw ConfigError("train: flip_prob must lie in [0, 1]");
}

std::vector<float> target_vector(const std::vector<int>& labels, int num_classes,
                                 LossKind kind) {
  if (labels.empty()) throw ContractError("target_vector: sample has no labels");
  std::vector<float> t(static_cast<std::size_t>(num_classes), 0.0f);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw ContractError("target_vector: label out of range");
    if (kind == LossKind::SoftmaxCe)
      t[static_cast<std::size_t>(l)] += 1.0f / static_cast<float>(labels.size());
    else
      t[static_cast<std::size_t>(l)] = 1.0f;
  }
  return t;
}

std::vector<EpochLog> train_convit(const ModelConfig& cfg, ModelParams<float>& params,
                                   const Manifest& data, const TrainConfig& tc,
                                   std::ostream* log) {
  validate_train_config(tc);
  if (data.samples.empty()) throw ContractError("train: empty dataset");
  const int K = cfg.num_classes;
  const int H = cfg.input_h, W = cfg.input_w;
  const int N = static_cast<int>(data.samples.size());
  for (const auto& s : data.samples)
    if (s.image.empty()) throw ContractError("train: sample images must be decoded");

  auto trainable = model_trainable_params(params);
  set_requires_grad(trainable, true);
  set_backbone_mode(params.backbone, NormMode::Train);
  OptimizerState<float> opt;

  std::vector<EpochLog> logs;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, tc);
    std::vector<int> order(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
    SplitMix64 shuffle_rng(
        SplitMix64::derive(tc.seed, static_cast<std::uint64_t>(epoch), kShuffleTag));
    seeded_shuffle(order, shuffle_rng);

    double loss_sum = 0;
    int batches = 0;
    for (int start = 0; start < N; start += tc.batch_size) {
      const int B = std::min(tc.batch_size, N - start);
      if (B < 2) break;  // batch-norm train mode needs >= 2 rows

      // Per-sample augmentation, each on its own (seed, epoch, index) stream.
      std::vector<std::vector<float>> xs(static_cast<std::size_t>(B));
      std::vector<std::vector<float>> ys(static_cast<std::size_t>(B));
      for (int j = 0; j < B; ++j) {
        const int di = order[static_cast<std::size_t>(start + j)];
        const Sample& s = data.samples[static_cast<std::size_t>(di)];
        SplitMix64 r(SplitMix64::derive(tc.seed, static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(di)));
        const BoundingBox guide =
            s.persons.empty()
                ? BoundingBox{0, 0, static_cast<double>(s.image.width),
                              static_cast<double>(s.image.height)}
                : s.persons.front().first;
        auto [flipped, fbox] = horizontal_flip(s.image, guide, r, tc.flip_prob);
        auto [cropped, cbox] =
            random_crop_keep_box(flipped, fbox, H, W, tc.crop_keep_fraction, r);
        (void)cbox;
        xs[static_cast<std::size_t>(j)] =
            image_to_values<float>(cropped, cfg.pixel_mean, cfg.pixel_std);
        ys[static_cast<std::size_t>(j)] = target_vector(s.labels, K, tc.loss_kind);
      }

      // Batch-internal mixup: blend each member with a seeded random partner,
      // always reading from the pre-mix originals.
      SplitMix64 mix_rng(SplitMix64::derive(tc.seed, static_cast<std::uint64_t>(epoch),
                                            kMixTag + static_cast<std::uint64_t>(start)));
      std::vector<float> xb(static_cast<std::size_t>(B) * H * W * 3);
      std::vector<float> yb(static_cast<std::size_t>(B) * K);
      for (int j = 0; j < B; ++j) {
        const int p = static_cast<int>(mix_rng.next_int(B));
        auto [xm, ym, l] =
            mixup(xs[static_cast<std::size_t>(j)], ys[static_cast<std::size_t>(j)],
                  xs[static_cast<std::size_t>(p)], ys[static_cast<std::size_t>(p)],
                  tc.mixup_alpha, mix_rng);
        (void)l;
        std::copy(xm.begin(), xm.end(), xb.begin() + static_cast<std::int64_t>(j) * H * W * 3);
        std::copy(ym.begin(), ym.end(), yb.begin() + static_cast<std::int64_t>(j) * K);
      }

      TensorF x({B, H, W, 3}, std::move(xb));
      TensorF y({B, K}, std::move(yb));
      Tape<float> tape;
      float batch_loss;
      {
        TapeScope<float> scope(tape);
        auto logits = convit_forward(x, cfg, params);
        auto L = loss(logits, y, tc.loss_kind);
        batch_loss = L.value()[0];
        if (!std::isfinite(batch_loss))
          throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
        tape.backward(L);
      }
      sgd_step(trainable, opt, static_cast<float>(lr), static_cast<float>(tc.momentum),
               static_cast<float>(tc.weight_decay));
      for (auto& [name, t] : trainable) t.zero_grad();
      loss_sum += batch_loss;
      ++batches;
    }
    if (batches == 0) throw ContractError("train: no usable batch (need >= 2 samples)");
    emit_epoch(logs, log, epoch, lr, loss_sum / batches);
  }
  return logs;
}

std::vector<EpochLog> train_branch(const ModelConfig& cfg, ModelParams<float>& convit,
                                   const BranchConfig& bcfg, BranchParams<float>& branch,
                                   const Manifest& data, const TrainConfig& tc,
                                   std::ostream* log) {
  validate_train_config(tc);
  const BranchShapeChain bsc = branch_shape_chain(bcfg);
  const ShapeChain sc = shape_chain(cfg);
  if (bsc.gap_dim != sc.backbone_c)
    throw ConfigError("train-branch: branch embed dim must match backbone channels");
  if (cfg.input_h % sc.backbone_h != 0 || cfg.input_w % sc.backbone_w != 0 ||
      cfg.input_h / sc.backbone_h != cfg.input_w / sc.backbone_w)
    throw ConfigError("train-branch: anisotropic feature stride unsupported");
  const int stride = cfg.input_h / sc.backbone_h;
  const int K = bcfg.num_classes;

  const auto persons = collect_persons(data);
  if (persons.empty()) throw ContractError("train-branch: dataset has no person boxes");

  // Freeze the whole ConViT: no grads anywhere, batch norm on running stats.
  auto frozen = model_trainable_params(convit);
  set_requires_grad(frozen, false);
  set_backbone_mode(convit.backbone, NormMode::Eval);

  // Cache one backbone map per involved image, then pre-pool every person
  // region (roi_pool is pure, so this is loss-free).
  std::map<int, TensorF> fm_cache;
  std::vector<std::vector<float>> rois(persons.size());
  const int cells = bcfg.roi_h * bcfg.roi_w * bsc.gap_dim;
  for (std::size_t p = 0; p < persons.size(); ++p) {
    const auto& pr = persons[p];
    auto it = fm_cache.find(pr.sample);
    if (it == fm_cache.end()) {
      const Sample& s = data.samples[static_cast<std::size_t>(pr.sample)];
      if (s.image.empty()) throw ContractError("train-branch: sample images must be decoded");
      auto fm = backbone_forward(prepare_input(s.image, cfg), cfg, convit);
      it = fm_cache.emplace(pr.sample, reshape(fm, {sc.backbone_h, sc.backbone_w, sc.backbone_c}))
               .first;
    }
    const Sample& s = data.samples[static_cast<std::size_t>(pr.sample)];
    const BoundingBox box =
        box_in_center_crop(pr.box, s.image.height, s.image.width, cfg.input_h, cfg.input_w);
    rois[p] = roi_pool(it->second, box, bcfg.roi_h, bcfg.roi_w, stride).value();
  }

  auto trainable = branch_named_params(branch);
  set_requires_grad(trainable, true);
  OptimizerState<float> opt;

  const int P = static_cast<int>(persons.size());
  std::vector<EpochLog> logs;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, tc);
    std::vector<int> order(static_cast<std::size_t>(P));
    for (int i = 0; i < P; ++i) order[static_cast<std::size_t>(i)] = i;
    SplitMix64 shuffle_rng(
        SplitMix64::derive(tc.seed, static_cast<std::uint64_t>(epoch), kShuffleTag));
    seeded_shuffle(order, shuffle_rng);

    double loss_sum = 0;
    int batches = 0;
    for (int start = 0; start < P; start += tc.batch_size) {
      const int B = std::min(tc.batch_size, P - start);
      std::vector<float> xb(static_cast<std::size_t>(B) * cells);
      std::vector<float> yb(static_cast<std::size_t>(B) * K);
      for (int j = 0; j < B; ++j) {
        const int pi = order[static_cast<std::size_t>(start + j)];
        const auto& roi = rois[static_cast<std::size_t>(pi)];
        std::copy(roi.begin(), roi.end(),
                  xb.begin() + static_cast<std::int64_t>(j) * cells);
        const auto t = target_vector({persons[static_cast<std::size_t>(pi)].label}, K,
                                     tc.loss_kind);
        std::copy(t.begin(), t.end(), yb.begin() + static_cast<std::int64_t>(j) * K);
      }
      TensorF x({B, bcfg.roi_h, bcfg.roi_w, bsc.gap_dim}, std::move(xb));
      TensorF y({B, K}, std::move(yb));
      Tape<float> tape;
      float batch_loss;
      {
        TapeScope<float> scope(tape);
        auto L = loss(branch_logits(x, bcfg, branch), y, tc.loss_kind);
        batch_loss = L.value()[0];
        if (!std::isfinite(batch_loss))
          throw NumericError("train-branch: loss diverged at epoch " + std::to_string(epoch));
        tape.backward(L);
      }
      sgd_step(trainable, opt, static_cast<float>(lr), static_cast<float>(tc.momentum),
               static_cast<float>(tc.weight_decay));
      for (auto& [name, t] : trainable) t.zero_grad();
      loss_sum += batch_loss;
      ++batches;
    }
    emit_epoch(logs, log, epoch, lr, loss_sum / batches);
  }
  return logs;
}

}  // namespace convit
