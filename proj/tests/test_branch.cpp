#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "convit/branch.hpp"
#include "convit/fusion.hpp"
#include "convit/rng.hpp"
#include "doctest.h"

using namespace convit;

namespace {

TensorD rnd(SplitMix64& rng, Shape sh, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(sh)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return TensorD(std::move(sh), std::move(d));
}

// Max over an integer cell region [y0,y1) x [x0,x1) of a [H,W,C] map.
double region_max(const TensorD& fm, int y0, int y1, int x0, int x1, int c) {
  const int W = fm.dim(1), C = fm.dim(2);
  double best = fm.value()[static_cast<std::size_t>((y0 * W + x0) * C + c)];
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      best = std::max(best, fm.value()[static_cast<std::size_t>((y * W + x) * C + c)]);
  return best;
}

std::vector<int> divisors(int n) {
  std::vector<int> out;
  for (int d = 1; d <= n; ++d)
    if (n % d == 0) out.push_back(d);
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("branch");

TEST_CASE("roi_pool: constant map pools to the constant for any bin layout") {
  auto fm = TensorD::full({5, 7, 3}, 1.25);
  const BoundingBox box{0.0, 0.0, 7.0, 5.0};
  for (auto [oh, ow] : {std::pair{2, 2}, std::pair{3, 3}, std::pair{5, 7}, std::pair{1, 1}}) {
    auto r = roi_pool(fm, box, oh, ow, 1);
    REQUIRE(r.shape() == Shape{oh, ow, 3});
    for (double v : r.value()) CHECK(v == 1.25);
  }
}

TEST_CASE("roi_pool: whole 4x4 box with 2x2 bins takes quadrant maxima") {
  std::vector<double> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = i + 1;  // 1..16 reading order
  TensorD fm({4, 4, 1}, vals);
  auto r = roi_pool(fm, BoundingBox{0.0, 0.0, 4.0, 4.0}, 2, 2, 1);
  REQUIRE(r.shape() == Shape{2, 2, 1});
  CHECK(r.value()[0] == 6.0);   // max of {1,2,5,6}
  CHECK(r.value()[1] == 8.0);   // max of {3,4,7,8}
  CHECK(r.value()[2] == 14.0);  // max of {9,10,13,14}
  CHECK(r.value()[3] == 16.0);  // max of {11,12,15,16}
}

TEST_CASE("roi_pool: exhaustive sub-block oracle on integer-aligned boxes") {
  // When the box is cell-aligned and the bin counts divide the region size,
  // every bin is exactly one sub-block; the pooled value must equal the
  // brute-force max of that sub-block, bit for bit.
  SplitMix64 r(20240815);
  const int H = 8, W = 8, C = 2;
  auto fm = rnd(r, {H, W, C});
  for (int y0 = 0; y0 < H; ++y0)
    for (int y1 = y0 + 1; y1 <= H; ++y1)
      for (int x0 = 0; x0 < W; ++x0)
        for (int x1 = x0 + 1; x1 <= W; ++x1) {
          const int rh = y1 - y0, rw = x1 - x0;
          const BoundingBox box{static_cast<double>(x0), static_cast<double>(y0),
                                static_cast<double>(x1), static_cast<double>(y1)};
          for (int oh : divisors(rh))
            for (int ow : divisors(rw)) {
              auto pooled = roi_pool(fm, box, oh, ow, 1);
              std::vector<double> want(static_cast<std::size_t>(oh) * ow * C);
              const int sy = rh / oh, sx = rw / ow;
              for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                  for (int c = 0; c < C; ++c)
                    want[static_cast<std::size_t>((oy * ow + ox) * C + c)] =
                        region_max(fm, y0 + oy * sy, y0 + (oy + 1) * sy, x0 + ox * sx,
                                   x0 + (ox + 1) * sx, c);
              INFO("box y[", y0, ",", y1, ") x[", x0, ",", x1, ") bins ", oh, "x", ow);
              CHECK(pooled.value() == want);
            }
        }
}

TEST_CASE("roi_pool: fractional edges snap outward with floor/ceil") {
  std::vector<double> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = i * 1.5 - 7.0;
  TensorD fm({4, 4, 1}, vals);

  // y in [0.2, 1.6) -> rows [0,2); x in [0.8, 3.2) -> cols [0,4).
  auto r1 = roi_pool(fm, BoundingBox{0.8, 0.2, 3.2, 1.6}, 1, 1, 1);
  CHECK(r1.value()[0] == region_max(fm, 0, 2, 0, 4, 0));

  // Same box, 1x2 bins over cols [0,2) and [2,4).
  auto r2 = roi_pool(fm, BoundingBox{0.8, 0.2, 3.2, 1.6}, 1, 2, 1);
  CHECK(r2.value()[0] == region_max(fm, 0, 2, 0, 2, 0));
  CHECK(r2.value()[1] == region_max(fm, 0, 2, 2, 4, 0));

  // Image-coordinate box with stride 16: x [20,40) -> cells [1,3),
  // y [10,34) -> cells [0,3).
  SplitMix64 rr(5);
  auto big = rnd(rr, {8, 8, 2});
  auto r3 = roi_pool(big, BoundingBox{20.0, 10.0, 40.0, 34.0}, 1, 1, 16);
  CHECK(r3.value()[0] == region_max(big, 0, 3, 1, 3, 0));
  CHECK(r3.value()[1] == region_max(big, 0, 3, 1, 3, 1));

  // Sub-cell box snaps to the single cell that contains it.
  auto r4 = roi_pool(fm, BoundingBox{2.2, 3.1, 2.9, 3.8}, 1, 1, 1);
  CHECK(r4.value()[0] == fm.value()[static_cast<std::size_t>((3 * 4 + 2) * 1)]);
}

TEST_CASE("roi_pool: nested boxes give monotone single-bin responses") {
  SplitMix64 r(99);
  auto fm = rnd(r, {8, 8, 3});
  for (int trial = 0; trial < 50; ++trial) {
    const double ox0 = r.uniform(0.0, 5.0), oy0 = r.uniform(0.0, 5.0);
    const double ox1 = r.uniform(ox0 + 1.0, 8.0), oy1 = r.uniform(oy0 + 1.0, 8.0);
    const double ix0 = r.uniform(ox0, ox1 - 0.5), iy0 = r.uniform(oy0, oy1 - 0.5);
    const double ix1 = r.uniform(ix0 + 0.25, ox1), iy1 = r.uniform(iy0 + 0.25, oy1);
    auto outer = roi_pool(fm, BoundingBox{ox0, oy0, ox1, oy1}, 1, 1, 1);
    auto inner = roi_pool(fm, BoundingBox{ix0, iy0, ix1, iy1}, 1, 1, 1);
    for (int c = 0; c < 3; ++c)
      CHECK(outer.value()[static_cast<std::size_t>(c)] >=
            inner.value()[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("roi_pool: boxes outside the grid and bad arguments throw") {
  auto fm = TensorD::full({4, 4, 2}, 1.0);
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{4.0, 0.0, 6.0, 2.0}, 1, 1, 1), BoxError);
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{-3.0, 0.0, -1.0, 2.0}, 1, 1, 1), BoxError);
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{0.0, 64.0, 2.0, 66.0}, 1, 1, 16), BoxError);
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{2.0, 2.0, 2.0, 3.0}, 1, 1, 1), BoxError);  // empty
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{3.0, 3.0, 1.0, 4.0}, 1, 1, 1), BoxError);  // inverted
  CHECK_THROWS_AS(roi_pool(TensorD::zeros({1, 4, 4, 2}), BoundingBox{0, 0, 1, 1}, 1, 1, 1),
                  ShapeError);
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{0, 0, 2, 2}, 0, 1, 1), ConfigError);
  CHECK_THROWS_AS(roi_pool(fm, BoundingBox{0, 0, 2, 2}, 1, 1, 0), ConfigError);
}

TEST_CASE("branch_shape_chain: toy 6x4 -> 3x2 and the 10x6 -> 5x3 geometry") {
  const auto toy = branch_shape_chain(toy_branch_config(4, 64));
  CHECK(toy.r1_h == 6);
  CHECK(toy.r1_w == 4);
  CHECK(toy.r2_h == 3);
  CHECK(toy.r2_w == 2);
  CHECK(toy.gap_dim == 64);
  CHECK(toy.logits_dim == 4);

  const auto big = branch_shape_chain(paper_branch_geometry(40));
  CHECK(big.r1_h == 10);
  CHECK(big.r1_w == 6);
  CHECK(big.r2_h == 5);
  CHECK(big.r2_w == 3);
  CHECK(big.gap_dim == 2048);
  CHECK(big.logits_dim == 40);
}

TEST_CASE("branch_shape_chain: inconsistent configs are rejected") {
  auto cfg = toy_branch_config(4, 64);
  cfg.roi_h = 5;  // odd
  CHECK_THROWS_AS(branch_shape_chain(cfg), ConfigError);

  cfg = toy_branch_config(4, 64);
  cfg.vit_r1.seq_h = 4;  // != roi grid
  CHECK_THROWS_AS(branch_shape_chain(cfg), ConfigError);

  cfg = toy_branch_config(4, 64);
  cfg.vit_r2.seq_w = 4;  // must be roi grid halved
  CHECK_THROWS_AS(branch_shape_chain(cfg), ConfigError);

  cfg = toy_branch_config(4, 64);
  cfg.vit_r2.embed_dim = 32;
  CHECK_THROWS_AS(branch_shape_chain(cfg), ConfigError);

  CHECK_THROWS_AS(branch_shape_chain(toy_branch_config(1, 64)), ConfigError);
}

TEST_CASE("human_branch_forward: one box becomes one deterministic logit row") {
  const auto cfg = toy_branch_config(3, 8);
  SplitMix64 r(31);
  auto params = init_branch_params<double>(cfg, r);
  auto fm = rnd(r, {8, 8, 8});

  // Image-space box on a stride-2 grid.
  const BoundingBox box{2.0, 2.0, 10.0, 14.0};
  auto logits = human_branch_forward(fm, box, 2, cfg, params);
  REQUIRE(logits.shape() == Shape{1, 3});
  for (double v : logits.value()) CHECK(std::isfinite(v));

  // Pure pipeline: replay is bit-identical.
  auto again = human_branch_forward(fm, box, 2, cfg, params);
  CHECK(again.value() == logits.value());

  // branch_logits rejects regions that do not match the configured grid.
  CHECK_THROWS_AS(branch_logits(TensorD::zeros({1, 4, 4, 8}), cfg, params), ShapeError);
  CHECK_THROWS_AS(branch_logits(TensorD::zeros({6, 4, 8}), cfg, params), ShapeError);
}

TEST_CASE("branch_named_params: unique names covering both ViTs and the head") {
  const auto cfg = toy_branch_config(3, 8);
  SplitMix64 r(37);
  auto params = init_branch_params<double>(cfg, r);
  auto named = branch_named_params(params);
  std::set<std::string> names;
  bool saw_r1 = false, saw_r2 = false, saw_w = false, saw_b = false;
  for (auto& [name, t] : named) {
    CHECK(t.valid());
    CHECK(names.insert(name).second);  // no duplicates
    if (name.rfind("branch.vit_r1", 0) == 0) saw_r1 = true;
    if (name.rfind("branch.vit_r2", 0) == 0) saw_r2 = true;
    if (name == "branch.head.w") saw_w = true;
    if (name == "branch.head.b") saw_b = true;
  }
  CHECK(saw_r1);
  CHECK(saw_r2);
  CHECK(saw_w);
  CHECK(saw_b);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("fusion");

TEST_CASE("fuse_predictions: the canonical weight instances are exact") {
  // 0.83/0.17 on opposing one-hot scores: picks out the weights themselves.
  auto f1 = fuse_predictions({1.0, 0.0}, {0.0, 1.0}, FusionWeights{0.83, 0.17});
  REQUIRE(f1.size() == 2);
  CHECK(f1[0] == 0.83);
  CHECK(f1[1] == 0.17);

  // 0.3/0.7 on identical uniform scores: convexity fixed point, bit-exact.
  auto f2 = fuse_predictions({0.5, 0.5}, {0.5, 0.5}, FusionWeights{0.3, 0.7});
  CHECK(f2[0] == 0.5);
  CHECK(f2[1] == 0.5);
}

TEST_CASE("fuse_predictions: degenerate weights copy one side unchanged") {
  SplitMix64 r(41);
  std::vector<double> a(5), b(5);
  for (auto& v : a) v = r.uniform(0.0, 1.0);
  for (auto& v : b) v = r.uniform(0.0, 1.0);
  CHECK(fuse_predictions(a, b, FusionWeights{1.0, 0.0}) == a);
  CHECK(fuse_predictions(a, b, FusionWeights{0.0, 1.0}) == b);
}

TEST_CASE("fuse_predictions: convex combination stays on the simplex") {
  SplitMix64 r(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(4), b(4);
    double sa = 0, sb = 0;
    for (auto& v : a) sa += (v = r.uniform(0.01, 1.0));
    for (auto& v : b) sb += (v = r.uniform(0.01, 1.0));
    for (auto& v : a) v /= sa;
    for (auto& v : b) v /= sb;
    const double wc = r.uniform(0.0, 1.0);
    auto f = fuse_predictions(a, b, FusionWeights{wc, 1.0 - wc});
    double sum = 0;
    for (double v : f) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fusion weights: negative or non-normalized pairs are rejected") {
  CHECK_THROWS_AS(validate_fusion_weights(FusionWeights{-0.1, 1.1}), ConfigError);
  CHECK_THROWS_AS(validate_fusion_weights(FusionWeights{1.1, -0.1}), ConfigError);
  CHECK_THROWS_AS(validate_fusion_weights(FusionWeights{0.6, 0.6}), ConfigError);
  CHECK_THROWS_AS(validate_fusion_weights(FusionWeights{0.5, 0.4999}), ConfigError);
  CHECK_NOTHROW(validate_fusion_weights(FusionWeights{0.83, 0.17}));
  CHECK_NOTHROW(validate_fusion_weights(FusionWeights{0.3, 0.7}));
  CHECK_THROWS_AS(fuse_predictions({0.5, 0.5}, {1.0}, FusionWeights{0.5, 0.5}), ShapeError);
}

TEST_CASE("score_loss: definition cases and the clamp") {
  using row = std::vector<double>;
  // Uniform binary prediction against a one-hot target: ln 2 either way.
  CHECK(score_loss({row{0.5, 0.5}}, {row{1.0, 0.0}}, ScoreLoss::CrossEntropy) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(score_loss({row{0.5, 0.5}}, {row{1.0, 0.0}}, ScoreLoss::BinaryCrossEntropy) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Perfect prediction is (numerically) zero loss.
  CHECK(score_loss({row{1.0, 0.0}}, {row{1.0, 0.0}}, ScoreLoss::CrossEntropy) ==
        doctest::Approx(0.0).epsilon(1e-9));

  // The clamp keeps log(0) finite: -log(1e-12).
  const double worst = score_loss({row{0.0, 1.0}}, {row{1.0, 0.0}}, ScoreLoss::CrossEntropy);
  CHECK(worst == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  CHECK(std::isfinite(worst));

  // Mean over samples: two rows average their losses.
  const double two = score_loss({row{0.5, 0.5}, row{1.0, 0.0}},
                                {row{1.0, 0.0}, row{1.0, 0.0}}, ScoreLoss::CrossEntropy);
  CHECK(two == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-9));

  CHECK_THROWS_AS(score_loss({}, {}, ScoreLoss::CrossEntropy), ContractError);
  CHECK_THROWS_AS(score_loss({row{0.5}}, {}, ScoreLoss::CrossEntropy), ShapeError);
  CHECK_THROWS_AS(score_loss({row{0.5}}, {row{0.5, 0.5}}, ScoreLoss::CrossEntropy), ShapeError);
}

TEST_CASE("fusion_weight_grid: endpoints pinned, step validated") {
  auto g = fusion_weight_grid(0.01);
  REQUIRE(g.size() == 101);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);

  auto coarse = fusion_weight_grid(0.3);  // 0, 0.3, 0.6, 0.9, 1
  REQUIRE(coarse.size() == 5);
  CHECK(coarse.back() == 1.0);

  CHECK(fusion_weight_grid(1.0) == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(fusion_weight_grid(0.0), ConfigError);
  CHECK_THROWS_AS(fusion_weight_grid(-0.5), ConfigError);
  CHECK_THROWS_AS(fusion_weight_grid(1.5), ConfigError);
}

TEST_CASE("search_fusion_weights: the all-knowing side takes all the weight") {
  using rows = std::vector<std::vector<double>>;
  const rows targets = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
  const rows uniform = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  const rows perfect = targets;

  auto w_h = search_fusion_weights(uniform, perfect, targets, ScoreLoss::CrossEntropy);
  CHECK(w_h.w_convit == 0.0);
  CHECK(w_h.w_human == 1.0);

  auto w_c = search_fusion_weights(perfect, uniform, targets, ScoreLoss::CrossEntropy);
  CHECK(w_c.w_convit == 1.0);
  CHECK(w_c.w_human == 0.0);
}

TEST_CASE("search_fusion_weights: ties resolve toward the ConViT weight") {
  using rows = std::vector<std::vector<double>>;
  // With predictions of exactly 0.5 and a grid of exact quarters, every fused
  // score is bit-exactly 0.5 (all products are multiples of 0.125), so every
  // grid point produces the identical loss and only the tie rule decides.
  const rows preds = {{0.5, 0.5}, {0.5, 0.5}};
  const rows targets = {{1.0, 0.0}, {0.0, 1.0}};
  auto w = search_fusion_weights(preds, preds, targets, ScoreLoss::CrossEntropy, 0.25);
  CHECK(w.w_convit == 1.0);
}

TEST_CASE("search_fusion_weights: agrees with a brute-force scan of the grid") {
  using rows = std::vector<std::vector<double>>;
  const rows pc = {{0.6, 0.4}, {0.3, 0.7}, {0.55, 0.45}};
  const rows ph = {{0.9, 0.1}, {0.6, 0.4}, {0.2, 0.8}};
  const rows targets = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
  const double step = 0.05;

  auto best = search_fusion_weights(pc, ph, targets, ScoreLoss::CrossEntropy, step);
  validate_fusion_weights(best);

  // Brute force with the same tie rule (scan downward, strict improvement).
  const auto grid = fusion_weight_grid(step);
  double best_loss = 0.0;
  double best_wc = -1.0;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    rows fused;
    for (std::size_t i = 0; i < pc.size(); ++i)
      fused.push_back(fuse_predictions(pc[i], ph[i], FusionWeights{*it, 1.0 - *it}));
    const double l = score_loss(fused, targets, ScoreLoss::CrossEntropy);
    if (best_wc < 0.0 || l < best_loss) {
      best_loss = l;
      best_wc = *it;
    }
  }
  CHECK(best.w_convit == best_wc);

  // The returned weight is a global grid minimizer.
  rows fused_best;
  for (std::size_t i = 0; i < pc.size(); ++i) fused_best.push_back(fuse_predictions(pc[i], ph[i], best));
  const double chosen = score_loss(fused_best, targets, ScoreLoss::CrossEntropy);
  for (double wc : grid) {
    rows fused;
    for (std::size_t i = 0; i < pc.size(); ++i)
      fused.push_back(fuse_predictions(pc[i], ph[i], FusionWeights{wc, 1.0 - wc}));
    CHECK(chosen <= score_loss(fused, targets, ScoreLoss::CrossEntropy) + 1e-15);
  }
}

TEST_SUITE_END();
