#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "convit/checkpoint.hpp"
#include "convit/config.hpp"
#include "convit/dataset.hpp"
#include "convit/format.hpp"
#include "convit/model.hpp"
#include "convit/netpbm.hpp"
#include "convit/rng.hpp"
#include "doctest.h"

using namespace convit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("convit_tests_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  REQUIRE(static_cast<bool>(out));
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(static_cast<bool>(out));
}

// Runs f, expects it to throw E, and returns the exception message.
template <class E, class F>
std::string thrown_message(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  } catch (...) {
    FAIL("threw the wrong exception type");
    return "";
  }
  FAIL("expected an exception, none was thrown");
  return "";
}

Image random_image(int h, int w, SplitMix64& rng) {
  Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_int(256));
  return img;
}

std::uint32_t u32_at(const std::string& bytes, std::size_t off) {
  REQUIRE(off + 4 <= bytes.size());
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + off, 4);
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("data-io");

// ---------------------------------------------------------------------------
// Netpbm.
// ---------------------------------------------------------------------------

TEST_CASE("ppm: write/read round-trip preserves every byte") {
  const auto dir = fresh_dir("ppm_roundtrip");
  SplitMix64 rng(314);
  Image img = random_image(5, 7, rng);
  const auto path = (dir / "img.ppm").string();
  write_ppm(img, path);
  Image back = read_ppm(path);
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("ppm: header comments and loose whitespace are accepted") {
  const auto dir = fresh_dir("ppm_header");
  std::string payload(7 * 5 * 3, '\0');
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = static_cast<char>(static_cast<unsigned char>(i % 251));
  const auto path = dir / "hand.ppm";
  write_bytes(path, "P6 # binary rgb\n# full-line comment\n  7\t5\n# one more\n255\n" + payload);
  Image img = read_ppm(path.string());
  CHECK(img.width == 7);
  CHECK(img.height == 5);
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(0, 0, 2) == 2);
  CHECK(img.at(4, 6, 2) == (7 * 5 * 3 - 1) % 251);
}

TEST_CASE("ppm: malformed files raise ParseError, unopenable raise IoError") {
  const auto dir = fresh_dir("ppm_bad");
  const auto path = dir / "bad.ppm";

  write_bytes(path, std::string("P5\n2 2\n255\n") + std::string(12, 'x'));
  CHECK_THROWS_AS(read_ppm(path.string()), ParseError);  // wrong magic

  write_bytes(path, std::string("P6\n2 2\n65535\n") + std::string(24, 'x'));
  CHECK_THROWS_AS(read_ppm(path.string()), ParseError);  // unsupported maxval

  write_bytes(path, std::string("P6\n2 2\n255\n") + std::string(5, 'x'));
  CHECK_THROWS_AS(read_ppm(path.string()), ParseError);  // truncated payload

  write_bytes(path, "P6\n2 nope\n255\n");
  CHECK_THROWS_AS(read_ppm(path.string()), ParseError);  // bad dimension token

  CHECK_THROWS_AS(read_ppm((dir / "missing.ppm").string()), IoError);
}

TEST_CASE("pgm: round-trip and magic mismatch") {
  const auto dir = fresh_dir("pgm");
  GrayImage g;
  g.width = 3;
  g.height = 2;
  g.pixels = {0, 60, 120, 180, 240, 255};
  const auto path = (dir / "g.pgm").string();
  write_pgm(g, path);
  GrayImage back = read_pgm(path);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == g.pixels);

  // A PPM is not a PGM.
  Image rgb;
  rgb.width = rgb.height = 1;
  rgb.pixels = {1, 2, 3};
  write_ppm(rgb, (dir / "c.ppm").string());
  CHECK_THROWS_AS(read_pgm((dir / "c.ppm").string()), ParseError);
  CHECK_THROWS_AS(read_pgm((dir / "absent.pgm").string()), IoError);
}

TEST_CASE("render_heatmap: min-max scaling and nearest-neighbor upscale") {
  // Constant maps carry no signal and render as all zeros.
  auto flat = render_heatmap(TensorD::full({3, 3}, 3.7), 6, 6);
  CHECK(flat.width == 6);
  CHECK(flat.height == 6);
  for (auto p : flat.pixels) CHECK(p == 0);

  // [[0,1],[1,0]] upscaled 4x: crisp 0/255 quadrant blocks.
  TensorD checker({2, 2}, {0.0, 1.0, 1.0, 0.0});
  auto up = render_heatmap(checker, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const int want = ((y < 4) != (x < 4)) ? 255 : 0;
      CHECK(up.pixels[static_cast<std::size_t>(y * 8 + x)] == want);
    }

  // Native resolution: affine 0..255 with rounding.
  TensorD vals({2, 2}, {-1.0, 0.0, 1.0, 3.0});
  auto native = render_heatmap(vals, 2, 2);
  CHECK(native.pixels == std::vector<std::uint8_t>{0, 64, 128, 255});

  // Non-square upscale follows (y*H)/out_h source indexing.
  auto tall = render_heatmap(checker, 4, 2);
  CHECK(tall.pixels == std::vector<std::uint8_t>{0, 255, 0, 255, 255, 0, 255, 0});

  CHECK_THROWS_AS(render_heatmap(TensorD::zeros({4}), 2, 2), ShapeError);
  CHECK_THROWS_AS(render_heatmap(checker, 0, 2), ConfigError);
}

TEST_CASE("emit_heatmap: the written PGM matches an independent parse") {
  const auto dir = fresh_dir("emit_heatmap");
  TensorD checker({2, 2}, {0.0, 1.0, 1.0, 0.0});
  const auto path = dir / "h.pgm";
  emit_heatmap(checker, path.string(), 4, 4);

  const std::string bytes = read_bytes(path);
  REQUIRE(bytes.size() > 16);
  const std::string header = bytes.substr(0, bytes.size() - 16);
  std::istringstream hs(header);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  hs >> magic >> w >> h >> maxval;
  CHECK(magic == "P5");
  CHECK(w == 4);
  CHECK(h == 4);
  CHECK(maxval == 255);

  const auto want = render_heatmap(checker, 4, 4).pixels;
  for (int i = 0; i < 16; ++i)
    CHECK(static_cast<std::uint8_t>(bytes[bytes.size() - 16 + static_cast<std::size_t>(i)]) ==
          want[static_cast<std::size_t>(i)]);
}

// ---------------------------------------------------------------------------
// Manifest.
// ---------------------------------------------------------------------------

TEST_CASE("manifest: save/load round-trip without decoding") {
  const auto dir = fresh_dir("manifest_roundtrip");
  Manifest m;
  m.classes = {"above", "below", "left", "right"};
  Sample a;
  a.image_file = "one.ppm";
  a.labels = {2};
  Sample b;
  b.image_file = "two.ppm";
  b.labels = {0, 3};
  b.persons = {{BoundingBox{1.25, 2.0, 30.5, 40.0}, 1},
               {BoundingBox{0.0, 0.0, 8.0, 8.0}, 3}};
  m.samples = {a, b};

  const auto path = (dir / "manifest.txt").string();
  save_manifest(m, path);
  Manifest back = load_manifest(path, false);

  CHECK(back.classes == m.classes);
  REQUIRE(back.samples.size() == 2);
  CHECK(back.samples[0].image_file == "one.ppm");
  CHECK(back.samples[0].labels == std::vector<int>{2});
  CHECK(back.samples[0].persons.empty());
  CHECK(back.samples[1].labels == (std::vector<int>{0, 3}));
  REQUIRE(back.samples[1].persons.size() == 2);
  CHECK(back.samples[1].persons[0].first.x_min == 1.25);  // fmt_double round-trip is exact
  CHECK(back.samples[1].persons[0].first.y_max == 40.0);
  CHECK(back.samples[1].persons[0].second == 1);
  CHECK(back.samples[1].persons[1].second == 3);
  CHECK(back.samples[1].image.empty());  // decode_images = false
}

TEST_CASE("manifest: parse errors carry the path and 1-based line number") {
  const auto dir = fresh_dir("manifest_errors");
  const auto path = dir / "m.txt";
  auto expect = [&](const std::string& content, const std::string& needle) {
    write_text(path, content);
    const std::string msg =
        thrown_message<ParseError>([&] { load_manifest(path.string(), false); });
    INFO("message: ", msg);
    CHECK(msg.find(needle) != std::string::npos);
    CHECK(msg.find(path.string()) != std::string::npos);
  };

  expect("a.ppm|0|\n", "expected 'classes");                             // no header
  expect("classes a,b\nok.ppm|0|\nbad.ppm|1|5,5,5,9:0\n", ":3:");       // degenerate box line
  expect("classes a,b\nbad.ppm|1|5,5,5,9:0\n", "degenerate box");       // ...and its reason
  expect("classes a,a\n", "duplicate class name");                       //
  expect("classes a,b c\n", "bad class name");                           // space inside a name
  expect("classes a,b\nx.ppm|7|\n", "out of range");                     // label >= K
  expect("classes a,b\nx.ppm|0\n", "expected 3 '|'-separated fields");   //
  expect("classes a,b\n|0|\n", "empty image file name");                 //
  expect("classes a,b\nx.ppm||\n", "at least one label");                //
  expect("classes a,b\nx.ppm|0|1,2,3,4\n", "missing ':label'");          //
  expect("classes a,b\nx.ppm|0|1,2,3:0\n", "box needs 4 coordinates");   //
  expect("classes a,b\nx.ppm|0|a,2,3,4:0\n", "bad number");              //
  expect("classes a,b\nx.ppm|zero|\n", "bad integer");                   //
  expect("", "missing 'classes' header");                                // empty file

  // Blank lines are skipped, not counted as samples.
  write_text(path, "classes a,b\n\nx.ppm|1|\n");
  Manifest ok = load_manifest(path.string(), false);
  REQUIRE(ok.samples.size() == 1);
  CHECK(ok.samples[0].labels == std::vector<int>{1});

  CHECK_THROWS_AS(load_manifest((dir / "nothere.txt").string(), false), IoError);
}

TEST_CASE("manifest: box bounds are validated only when decoding images") {
  const auto dir = fresh_dir("manifest_decode");
  SplitMix64 rng(7);
  write_ppm(random_image(16, 16, rng), (dir / "img.ppm").string());
  const auto path = dir / "m.txt";
  write_text(path, "classes a,b\nimg.ppm|0|0,0,20,20:1\n");

  Manifest lazy = load_manifest(path.string(), false);  // accepted: no pixels to check
  CHECK(lazy.samples[0].persons[0].first.x_max == 20.0);

  const std::string msg =
      thrown_message<ParseError>([&] { load_manifest(path.string(), true); });
  CHECK(msg.find("box exceeds image bounds") != std::string::npos);

  write_text(path, "classes a,b\nimg.ppm|0|2,3,10,12:1\n");
  Manifest eager = load_manifest(path.string(), true);
  CHECK(eager.samples[0].image.width == 16);
  CHECK(eager.samples[0].image.height == 16);
}

// ---------------------------------------------------------------------------
// Synthetic generator.
// ---------------------------------------------------------------------------

namespace {

struct Extent {
  int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
  bool found() const { return x1 >= 0; }
  void add(int x, int y) {
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x + 1);
    y1 = std::max(y1, y + 1);
  }
};

// Recover the actor (saturated red) and object (saturated blue) extents by
// color predicate; the palette keeps clutter and background away from both.
std::pair<Extent, Extent> scan_shapes(const Image& img) {
  Extent red, blue;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      if (r >= 180 && g <= 60 && b <= 60) red.add(x, y);
      if (b >= 180 && r <= 60 && g <= 60) blue.add(x, y);
    }
  return {red, blue};
}

}  // namespace

TEST_CASE("generate_synthetic: balanced, deterministic, self-consistent") {
  SyntheticSpec spec;  // 128px, 4 classes, seed 0
  const auto dir_a = fresh_dir("synth_a");
  const auto dir_b = fresh_dir("synth_b");
  Manifest ma = generate_synthetic(spec, 16, dir_a.string());
  Manifest mb = generate_synthetic(spec, 16, dir_b.string());

  CHECK(ma.classes == (std::vector<std::string>{"above", "below", "left", "right"}));
  REQUIRE(ma.samples.size() == 16);

  // Round-robin class balance: exactly 4 per class at n = 16.
  std::map<int, int> counts;
  for (const auto& s : ma.samples) {
    REQUIRE(s.labels.size() == 1);
    counts[s.labels[0]]++;
  }
  for (int k = 0; k < 4; ++k) CHECK(counts[k] == 4);

  // Same spec and seed: identical labels, boxes, and pixel bytes.
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(ma.samples[i].labels == mb.samples[i].labels);
    CHECK(ma.samples[i].image_file == mb.samples[i].image_file);
    REQUIRE(ma.samples[i].persons.size() == 1);
    CHECK(ma.samples[i].persons[0].first.x_min == mb.samples[i].persons[0].first.x_min);
    CHECK(ma.samples[i].persons[0].first.y_max == mb.samples[i].persons[0].first.y_max);
    CHECK(ma.samples[i].image.pixels == mb.samples[i].image.pixels);
  }

  // The files on disk are the returned images, and the manifest reloads.
  Image first = read_ppm((dir_a / "img_00000.ppm").string());
  CHECK(first.pixels == ma.samples[0].image.pixels);
  Manifest reloaded = load_manifest((dir_a / "manifest.txt").string(), true);
  REQUIRE(reloaded.samples.size() == 16);
  CHECK(reloaded.samples[5].labels == ma.samples[5].labels);
  CHECK(reloaded.samples[5].image.pixels == ma.samples[5].image.pixels);

  // Pixel-level self-check: recover both shapes by color and re-evaluate the
  // relational predicate on the recovered geometry.
  const double margin = spec.image_size / 16.0;
  for (const auto& s : ma.samples) {
    auto [red, blue] = scan_shapes(s.image);
    REQUIRE(red.found());
    REQUIRE(blue.found());

    // The recorded person box is exactly the actor's painted extent.
    const BoundingBox& pb = s.persons[0].first;
    CHECK(pb.x_min == red.x0);
    CHECK(pb.y_min == red.y0);
    CHECK(pb.x_max == red.x1);
    CHECK(pb.y_max == red.y1);

    // Actor center as the generator derives it from the box.
    const int side = red.x1 - red.x0;
    const double acx = red.x0 + side / 2;
    const double acy = red.y0 + side / 2;
    const double ocx = (blue.x0 + blue.x1) / 2.0;
    const double ocy = (blue.y0 + blue.y1) / 2.0;

    // Rasterizing the disc moves its center by at most ~a pixel, so the
    // relation must still hold with a slightly relaxed dominance margin.
    CHECK(relation_class(acx, acy, ocx, ocy, margin - 3.0) == s.labels[0]);
  }
}

TEST_CASE("generate_synthetic: partial rounds and invalid specs") {
  SyntheticSpec spec;
  spec.image_size = 64;
  const auto dir = fresh_dir("synth_small");
  Manifest m = generate_synthetic(spec, 10, dir.string());
  std::map<int, int> counts;
  for (const auto& s : m.samples) counts[s.labels[0]]++;
  CHECK(counts[0] == 3);  // round-robin: classes 0,1 get 3, classes 2,3 get 2
  CHECK(counts[1] == 3);
  CHECK(counts[2] == 2);
  CHECK(counts[3] == 2);

  SyntheticSpec bad = spec;
  bad.image_size = 16;
  CHECK_THROWS_AS(generate_synthetic(bad, 4, dir.string()), ConfigError);
  bad = spec;
  bad.num_classes = 3;
  CHECK_THROWS_AS(generate_synthetic(bad, 4, dir.string()), ConfigError);
  bad = spec;
  bad.clutter = -1;
  CHECK_THROWS_AS(generate_synthetic(bad, 4, dir.string()), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(spec, 0, dir.string()), ConfigError);
}

TEST_CASE("relation_class: dominant-axis classification with a margin") {
  // Object relative to actor at (64, 64), margin 8.
  CHECK(relation_class(64, 64, 64, 30, 8) == 0);   // above
  CHECK(relation_class(64, 64, 60, 100, 8) == 1);  // below
  CHECK(relation_class(64, 64, 20, 60, 8) == 2);   // left
  CHECK(relation_class(64, 64, 100, 70, 8) == 3);  // right
  CHECK(relation_class(64, 64, 80, 80, 8) == -1);  // diagonal: no dominant axis
  CHECK(relation_class(64, 64, 64, 64, 8) == -1);  // coincident centers

  // The margin is inclusive: |dominant| == |other| + margin qualifies.
  CHECK(relation_class(0, 0, 8, 0, 8) == 3);
  CHECK(relation_class(0, 0, 0, -8, 8) == 0);
  CHECK(relation_class(0, 0, 7.999, 0, 8) == -1);
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint: round-trip restores names, shapes and bits") {
  const auto dir = fresh_dir("ckpt_roundtrip");
  SplitMix64 rng(11);
  std::vector<std::pair<std::string, TensorF>> tensors;
  tensors.emplace_back("alpha", TensorF::uniform({2, 3}, rng, -4.0, 4.0));
  tensors.emplace_back("block0.w", TensorF::uniform({3, 1, 2}, rng, -1.0, 1.0));
  tensors.emplace_back("b", TensorF({1}, {-0.25f}));

  const auto path = (dir / "model.cvit").string();
  save_checkpoint(tensors, path);
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].first == tensors[i].first);
    CHECK(loaded[i].second.shape() == tensors[i].second.shape());
    CHECK(loaded[i].second.value() == tensors[i].second.value());  // bit-exact
  }
}

TEST_CASE("checkpoint: independent record walk of the binary layout") {
  const auto dir = fresh_dir("ckpt_layout");
  std::vector<std::pair<std::string, TensorF>> tensors;
  tensors.emplace_back("w", TensorF({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
  tensors.emplace_back("bias", TensorF({3}, {0.5f, -0.5f, 0.0f}));
  const auto path = dir / "layout.cvit";
  save_checkpoint(tensors, path.string());

  // Walk the documented format by hand: magic, u32 version, then per record
  // u32 name length, name, u32 rank, u32 dims, float32 payload.
  const std::string bytes = read_bytes(path);
  REQUIRE(bytes.size() >= 8);
  CHECK(bytes.substr(0, 4) == "CVIT");
  CHECK(u32_at(bytes, 4) == 1);  // kCheckpointVersion

  std::size_t off = 8;
  int records = 0;
  std::vector<std::string> names;
  while (off < bytes.size()) {
    const std::uint32_t name_len = u32_at(bytes, off);
    off += 4;
    names.push_back(bytes.substr(off, name_len));
    off += name_len;
    const std::uint32_t rank = u32_at(bytes, off);
    off += 4;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      numel *= u32_at(bytes, off);
      off += 4;
    }
    if (records == 0) {
      REQUIRE(numel == 4);
      float v0;
      std::memcpy(&v0, bytes.data() + off, 4);
      CHECK(v0 == 1.0f);
    }
    off += numel * 4;
    ++records;
  }
  CHECK(off == bytes.size());  // no trailing garbage
  CHECK(records == 2);
  CHECK(names == (std::vector<std::string>{"w", "bias"}));
}

TEST_CASE("checkpoint: corruption and mismatches raise typed errors") {
  const auto dir = fresh_dir("ckpt_errors");
  std::vector<std::pair<std::string, TensorF>> tensors;
  tensors.emplace_back("w", TensorF({2}, {1.0f, 2.0f}));
  const auto good = dir / "good.cvit";
  save_checkpoint(tensors, good.string());
  const std::string bytes = read_bytes(good);

  const auto bad = dir / "bad.cvit";
  write_bytes(bad, bytes.substr(0, bytes.size() - 3));  // truncated payload
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ParseError);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  write_bytes(bad, wrong_magic);
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ParseError);

  std::string wrong_version = bytes;
  wrong_version[4] = 9;  // little-endian low byte of the version field
  write_bytes(bad, wrong_version);
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ParseError);

  CHECK_THROWS_AS(load_checkpoint((dir / "missing.cvit").string()), IoError);

  // Assignment: exact name-set match, shape agreement.
  auto loaded = load_checkpoint(good.string());
  std::vector<std::pair<std::string, TensorF>> renamed;
  renamed.emplace_back("v", TensorF({2}, {0.0f, 0.0f}));
  CHECK_THROWS_AS(assign_checkpoint(renamed, loaded), ContractError);

  std::vector<std::pair<std::string, TensorF>> reshaped;
  reshaped.emplace_back("w", TensorF({1, 2}, {0.0f, 0.0f}));
  CHECK_THROWS_AS(assign_checkpoint(reshaped, loaded), ShapeError);

  std::vector<std::pair<std::string, TensorF>> extra;  // loaded has more than params
  extra.emplace_back("w", TensorF({2}, {0.0f, 0.0f}));
  auto extra_loaded = loaded;
  extra_loaded.emplace_back("stray", TensorF({1}, {1.0f}));
  CHECK_THROWS_AS(assign_checkpoint(extra, extra_loaded), ContractError);

  std::vector<std::pair<std::string, TensorF>> ok;
  ok.emplace_back("w", TensorF({2}, {0.0f, 0.0f}));
  assign_checkpoint(ok, loaded);
  CHECK(ok[0].second.value() == (std::vector<float>{1.0f, 2.0f}));
}

TEST_CASE("checkpoint: a reloaded model reproduces its logits bit-exactly") {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 32;
  cfg.backbone.stem_channels = 6;
  cfg.backbone.stages = {{1, 8}, {1, 12}};
  cfg.vit_a = ViTConfig{1, 2, 12, 2.0, 4, 4};
  cfg.vit_b = ViTConfig{1, 2, 12, 2.0, 2, 2};
  cfg.num_classes = 3;

  SplitMix64 r1(100), r2(200), rx(7);
  auto trained = init_model_params<float>(cfg, r1);
  set_backbone_mode(trained.backbone, NormMode::Eval);
  TensorF x = TensorF::uniform({1, 32, 32, 3}, rx, -1.0, 1.0);
  const auto want = convit_forward(x, cfg, trained).value();

  const auto dir = fresh_dir("ckpt_model");
  const auto path = (dir / "model.cvit").string();
  auto named = model_state_tensors(trained);
  save_checkpoint(named, path);

  auto fresh = init_model_params<float>(cfg, r2);  // different init
  set_backbone_mode(fresh.backbone, NormMode::Eval);
  auto fresh_named = model_state_tensors(fresh);
  assign_checkpoint(fresh_named, load_checkpoint(path));
  CHECK(convit_forward(x, cfg, fresh).value() == want);
}

// ---------------------------------------------------------------------------
// Run configuration.
// ---------------------------------------------------------------------------

TEST_CASE("config: presets and empty JSON give the documented defaults") {
  RunConfig rc = parse_run_config("{}", "test");
  CHECK(rc.preset == "toy");
  CHECK(rc.model.input_h == 128);
  CHECK(rc.model.num_classes == 4);
  CHECK(rc.model.use_vits);
  CHECK_FALSE(rc.model.multi_label);
  CHECK(rc.branch.roi_h == 6);
  CHECK(rc.branch.roi_w == 4);
  CHECK(rc.branch.num_classes == 4);
  CHECK(rc.train.base_lr == 0.001);
  CHECK(rc.train.momentum == 0.9);
  CHECK(rc.train.weight_decay == 3e-5);
  CHECK(rc.train.batch_size == 16);
  CHECK(rc.train.epochs == 50);
  CHECK(rc.train.lr_decay_factor == 0.1);
  CHECK(rc.train.lr_decay_every == 10);
  CHECK(rc.train.mixup_alpha == 0.4);
  CHECK(rc.train.crop_keep_fraction == 0.7);
  CHECK(rc.train.flip_prob == 0.5);
  CHECK(rc.train.seed == 42);
  CHECK(rc.train.loss_kind == LossKind::SoftmaxCe);

  RunConfig paper = parse_run_config(R"({"preset": "paper-geometry", "num_classes": 40})", "t");
  CHECK(paper.model.input_h == 448);
  CHECK(paper.model.backbone.stem_channels == 64);
  CHECK(paper.model.num_classes == 40);
  CHECK(paper.branch.roi_h == 10);
  CHECK(paper.branch.roi_w == 6);

  CHECK_THROWS_AS(preset_run_config("resnet", 4), ConfigError);
}

TEST_CASE("config: overrides, unknown keys and bad values") {
  RunConfig rc = parse_run_config(
      R"({"num_classes": 7, "multi_label": true, "use_vits": false,
          "train": {"epochs": 5, "batch_size": 4, "seed": 99, "base_lr": 0.01}})",
      "t");
  CHECK(rc.model.num_classes == 7);
  CHECK(rc.branch.num_classes == 7);
  CHECK(rc.model.multi_label);
  CHECK_FALSE(rc.model.use_vits);
  CHECK(rc.train.epochs == 5);
  CHECK(rc.train.batch_size == 4);
  CHECK(rc.train.seed == 99);
  CHECK(rc.train.base_lr == 0.01);
  // multi_label selects the BCE loss unless explicitly overridden...
  CHECK(rc.train.loss_kind == LossKind::SigmoidBce);
  // ...and an explicit loss_kind wins.
  RunConfig forced = parse_run_config(
      R"({"multi_label": true, "train": {"loss_kind": "softmax_ce"}})", "t");
  CHECK(forced.train.loss_kind == LossKind::SoftmaxCe);
  RunConfig bce = parse_run_config(R"({"train": {"loss_kind": "sigmoid_bce"}})", "t");
  CHECK(bce.train.loss_kind == LossKind::SigmoidBce);

  const std::string unknown =
      thrown_message<ConfigError>([&] { parse_run_config(R"({"bogus": 1})", "origin.json"); });
  CHECK(unknown.find("bogus") != std::string::npos);
  CHECK(unknown.find("origin.json") != std::string::npos);

  const std::string nested = thrown_message<ConfigError>(
      [&] { parse_run_config(R"({"train": {"lr": 0.1}})", "t"); });
  CHECK(nested.find("train.lr") != std::string::npos);

  const std::string badval = thrown_message<ConfigError>(
      [&] { parse_run_config(R"({"train": {"epochs": "many"}})", "t"); });
  CHECK(badval.find("bad value for 'epochs'") != std::string::npos);

  CHECK_THROWS_AS(parse_run_config(R"({"num_classes": "four"})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"num_classes": 1})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"preset": "resnet"})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"loss_kind": "mse"}})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": 0}})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": 3})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{nope", "t"), ParseError);
  CHECK_THROWS_AS(parse_run_config("[1,2]", "t"), ParseError);
}

TEST_CASE("config: load_run_config reads files and reports missing ones") {
  const auto dir = fresh_dir("config_files");
  const auto path = dir / "run.json";
  write_text(path, R"({"num_classes": 5, "train": {"epochs": 3}})");
  RunConfig rc = load_run_config(path.string());
  CHECK(rc.model.num_classes == 5);
  CHECK(rc.train.epochs == 3);
  CHECK_THROWS_AS(load_run_config((dir / "absent.json").string()), IoError);
}

// ---------------------------------------------------------------------------
// Number formatting.
// ---------------------------------------------------------------------------

TEST_CASE("fmt_double/parse_double: exact round-trip and strict parsing") {
  for (double v : {0.0, 0.1, 0.5, 0.83, -2.5e17, 1e-300, 3.141592653589793}) {
    const std::string s = fmt_double(v);
    CHECK(parse_double(s, "t") == v);  // shortest round-trip form is exact
  }
  CHECK(fmt_double(0.5) == "0.5");
  CHECK(parse_double("1e5", "t") == 100000.0);
  CHECK(parse_int("42", "t") == 42);
  CHECK(parse_int("-7", "t") == -7);

  CHECK_THROWS_AS(parse_double("abc", "ctx"), ParseError);
  CHECK_THROWS_AS(parse_double("1.5x", "ctx"), ParseError);
  CHECK_THROWS_AS(parse_double("", "ctx"), ParseError);
  CHECK_THROWS_AS(parse_int("4.5", "ctx"), ParseError);
  CHECK_THROWS_AS(parse_int("", "ctx"), ParseError);
  const std::string msg = thrown_message<ParseError>([&] { parse_double("junk", "myfile:7"); });
  CHECK(msg.find("myfile:7") != std::string::npos);
}

TEST_SUITE_END();
