#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "convit/geometry.hpp"
#include "convit/netpbm.hpp"
#include "convit/rng.hpp"

namespace convit {

// One annotated image: class labels plus zero or more (person box, label)
// pairs. Labels are indices into the dataset's class-name list.
struct Sample {
  std::string image_file;  // relative to the dataset root
  std::vector<int> labels;
  std::vector<std::pair<BoundingBox, int>> persons;
  Image image;  // decoded pixels (empty until loaded)
};

struct Manifest {
  std::string root;
  std::vector<std::string> classes;
  std::vector<Sample> samples;
};

// Line-oriented manifest:
//   classes <name>[,<name>...]
//   <image.ppm>|<label>[,<label>...]|[x0,y0,x1,y1:<label>[;...]]
// Labels are integer class indices. Parse errors carry 1-based line numbers.
Manifest load_manifest(const std::string& path, bool decode_images = true);
void save_manifest(const Manifest& m, const std::string& path);

// Synthetic relational dataset: an "actor" square and an "object" disc on a
// cluttered background; the class is the dominant-axis relation of the object
// to the actor (0 above, 1 below, 2 left, 3 right). The actor box is recorded
// as the person box.
struct SyntheticSpec {
  int image_size = 128;
  int num_classes = 4;  // must be 4 (above/below/left/right)
  int clutter = 6;      // distractor shape count
  std::uint64_t seed = 0;
};

extern const std::array<const char*, 4> kRelationNames;

// Dominant-axis relation of the object center relative to the actor center;
// returns -1 when neither axis dominates by at least `margin` (ambiguous).
int relation_class(double actor_cx, double actor_cy, double object_cx, double object_cy,
                   double margin);

// Generate n samples (classes balanced round-robin, so counts differ by at
// most 1), write PPM files plus `manifest.txt` into out_dir, and return the
// manifest. Deterministic under spec.seed.
Manifest generate_synthetic(const SyntheticSpec& spec, int n, const std::string& out_dir);

}  // namespace convit
