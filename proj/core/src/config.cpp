#include "convit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace convit {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& origin, const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError(origin + ": unknown key '" + scope + key + "'");
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& origin) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(origin + ": bad value for '" + std::string(key) + "'");
  }
}

}  // namespace

RunConfig preset_run_config(const std::string& preset, int num_classes) {
  RunConfig rc;
  rc.preset = preset;
  if (preset == "toy") {
    rc.model = toy_model_config(num_classes);
    rc.branch = toy_branch_config(num_classes, rc.model.vit_a.embed_dim);
  } else if (preset == "paper-geometry") {
    rc.model = paper_geometry_config(num_classes);
    rc.branch = paper_branch_geometry(num_classes);
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected 'toy' or 'paper-geometry')");
  }
  return rc;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": invalid JSON: " + e.what());
  }
  if (!root.is_object()) throw ParseError(origin + ": top-level JSON value must be an object");
  reject_unknown(root, {"preset", "num_classes", "multi_label", "use_vits", "train"}, origin,
                 "");

  std::string preset = "toy";
  int num_classes = 4;
  read_field(root, "preset", preset, origin);
  read_field(root, "num_classes", num_classes, origin);
  if (num_classes < 2) throw ConfigError(origin + ": num_classes must be >= 2");

  RunConfig rc = preset_run_config(preset, num_classes);
  read_field(root, "multi_label", rc.model.multi_label, origin);
  read_field(root, "use_vits", rc.model.use_vits, origin);
  if (rc.model.multi_label) rc.train.loss_kind = LossKind::SigmoidBce;

  if (const auto it = root.find("train"); it != root.end()) {
    if (!it->is_object()) throw ConfigError(origin + ": 'train' must be an object");
    reject_unknown(*it,
                   {"base_lr", "momentum", "weight_decay", "batch_size", "epochs",
                    "lr_decay_factor", "lr_decay_every", "mixup_alpha", "crop_keep_fraction",
                    "flip_prob", "seed", "loss_kind"},
                   origin, "train.");
    TrainConfig& t = rc.train;
    read_field(*it, "base_lr", t.base_lr, origin);
    read_field(*it, "momentum", t.momentum, origin);
    read_field(*it, "weight_decay", t.weight_decay, origin);
    read_field(*it, "batch_size", t.batch_size, origin);
    read_field(*it, "epochs", t.epochs, origin);
    read_field(*it, "lr_decay_factor", t.lr_decay_factor, origin);
    read_field(*it, "lr_decay_every", t.lr_decay_every, origin);
    read_field(*it, "mixup_alpha", t.mixup_alpha, origin);
    read_field(*it, "crop_keep_fraction", t.crop_keep_fraction, origin);
    read_field(*it, "flip_prob", t.flip_prob, origin);
    read_field(*it, "seed", t.seed, origin);
    if (const auto lk = it->find("loss_kind"); lk != it->end()) {
      const std::string kind = lk->is_string() ? lk->get<std::string>() : "";
      if (kind == "softmax_ce")
        t.loss_kind = LossKind::SoftmaxCe;
      else if (kind == "sigmoid_bce")
        t.loss_kind = LossKind::SigmoidBce;
      else
        throw ConfigError(origin +
                          ": train.loss_kind must be 'softmax_ce' or 'sigmoid_bce', got '" +
                          kind + "'");
    }
  }
  validate_train_config(rc.train);
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

}  // namespace convit
