#include "veil/config.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "veil/errors.h"
#include "veil/manifest.h"

namespace veil {

using nlohmann::json;

namespace {

// JSON has no infinity literal; "inf" strings are accepted for real keys.
double to_real(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    try {
      size_t used = 0;
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("config key '" + key + "' expects a number, got " + v.dump());
}

json coerce(const json& def, const json& v, const std::string& key) {
  if (def.is_boolean()) {
    if (v.is_boolean()) return v;
    throw ConfigError("config key '" + key + "' expects true/false, got " + v.dump());
  }
  if (def.is_number_integer()) {
    if (v.is_number_integer()) return v;
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return v.get<int64_t>();
    throw ConfigError("config key '" + key + "' expects an integer, got " + v.dump());
  }
  if (def.is_number()) {
    const double d = to_real(v, key);
    return std::isinf(d) ? json("inf") : json(d);
  }
  if (def.is_string()) {
    if (v.is_string()) return v;
    throw ConfigError("config key '" + key + "' expects a string, got " + v.dump());
  }
  if (def.is_array()) {
    if (!v.is_array()) throw ConfigError("config key '" + key + "' expects a list, got " + v.dump());
    json out = json::array();
    for (const auto& e : v) {
      const double d = to_real(e, key);
      out.push_back(std::isinf(d) ? json("inf") : json(d));
    }
    return out;
  }
  return v;
}

const ExperimentConfig::Key* find_key(const std::string& name) {
  for (const auto& k : ExperimentConfig::keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

const std::vector<ExperimentConfig::Key>& ExperimentConfig::keys() {
  static const std::vector<Key> table = {
      {"seed", 0, "global seed"},
      {"output_dir", "runs", "directory for all outputs"},
      {"deterministic", true, "single-threaded deterministic kernels"},
      {"data.dir", "", "directory of frame-directory videos (empty: synthetic)"},
      {"data.height", 64, "frame height"},
      {"data.width", 64, "frame width"},
      {"data.length", 20, "frames per synthetic video"},
      {"data.chunk_frames", 5, "frames per chunk"},
      {"data.videos", 16, "synthetic training videos per pool"},
      {"data.eval_videos", 4, "synthetic held-out videos per pool"},
      {"trainer.steps", 2000, "joint training steps"},
      {"trainer.codec_pretrain_steps", 1000, "codec warm-up steps"},
      {"trainer.batch_size", 4, "chunks per step"},
      {"trainer.lr_codec", 2e-5, "codec learning rate during joint training"},
      {"trainer.lr_hiding", 4e-4, "hider/extractor learning rate"},
      {"trainer.lr_pretrain", 1e-3, "codec learning rate during warm-up"},
      {"trainer.snr_min_db", 5.0, "lower bound of training SNR"},
      {"trainer.snr_max_db", 30.0, "upper bound of training SNR"},
      {"trainer.capacity_ratio", 0.5, "fraction of each batch carrying secrets"},
      {"trainer.grad_clip_norm", 1.0, "global gradient norm bound"},
      {"trainer.eval_every", 100, "joint steps between held-out probes (0: off)"},
      {"trainer.eval_snr_db", 25.0, "probe SNR"},
      {"trainer.resume", "", "checkpoint to resume from"},
      {"losses.cover", 1.0, "cover reconstruction weight"},
      {"losses.secret", 1.0, "secret reconstruction weight"},
      {"losses.perceptual", 0.1, "perceptual weight"},
      {"losses.kl_cover", 1e-6, "cover KL weight"},
      {"losses.kl_secret", 1e-6, "secret KL weight"},
      {"losses.embedding", 1e-2, "embedding constraint weight"},
      {"losses.null", 1.0, "null-secret weight"},
      {"hiding.latent_dim", 96, "hiding network width"},
      {"hiding.depth", 4, "hiding network stages"},
      {"hiding.attention_heads", 8, "temporal attention heads"},
      {"channel.snr_db", 25.0, "channel SNR in dB (\"inf\" for noiseless)"},
      {"scheduler.capacity_ratio", 0.5, "capacity ratio r for transmission"},
      {"checkpoint", "", "checkpoint path"},
      {"transmit.cover", "", "cover video frame directory"},
      {"transmit.secret", "", "secret video frame directory (optional)"},
      {"report.run_dir", "", "run directory to render (default: output_dir)"},
      {"sweep.snr_db", json::array({0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0}), "SNR grid"},
      {"sweep.capacity_ratio", json::array({0.2, 0.5, 1.0}), "capacity ratio grid"},
      {"adversary.capacity_ratio", json::array({0.2, 1.0}), "detector capacity ratio grid"},
      {"adversary.snr_db", 30.0, "detector/attack SNR"},
      {"adversary.dataset_size", 512, "detector clips per class split"},
      {"adversary.chunks_per_session", 4, "chunks per detector session"},
      {"adversary.epochs", 30, "detector epochs"},
      {"adversary.batch_size", 32, "detector batch size"},
      {"adversary.lr", 1e-3, "detector learning rate"},
      {"adversary.epsilon", 0.01, "attack L-inf budget"},
      {"adversary.pgd_steps", 10, "PGD iterations"},
      {"adversary.pgd_step_size", 0.0025, "PGD step size"},
      {"adversary.beta", 1.0, "cover penalty in the attack objective"},
  };
  return table;
}

ExperimentConfig::ExperimentConfig() : values_(json::object()) {
  for (const auto& k : keys()) values_[k.name] = coerce(k.default_value, k.default_value, k.name);
}

json flatten_config(const json& j) {
  json out = json::object();
  std::function<void(const json&, const std::string&)> walk = [&](const json& node, const std::string& prefix) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      const auto key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (it->is_object()) {
        walk(*it, key);
      } else {
        out[key] = *it;
      }
    }
  };
  walk(j, "");
  return out;
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold a JSON object");
  // A run manifest carries the full flat config of the run it describes.
  if (is_manifest(j)) {
    merge(j.at("config"));
    return;
  }
  merge(flatten_config(j));
}

void ExperimentConfig::merge(const json& flat) {
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    const auto* k = find_key(it.key());
    if (!k) throw ConfigError("unknown config key '" + it.key() + "'");
    values_[k->name] = coerce(k->default_value, *it, k->name);
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const auto* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  json v;
  if (k->default_value.is_string()) {
    v = raw;
  } else if (k->default_value.is_boolean()) {
    if (raw == "true" || raw == "1") v = true;
    else if (raw == "false" || raw == "0") v = false;
    else throw ConfigError("config key '" + key + "' expects true/false, got '" + raw + "'");
  } else if (k->default_value.is_array()) {
    v = json::array();
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) v.push_back(item);
    }
  } else if (k->default_value.is_number_integer()) {
    try {
      size_t used = 0;
      v = static_cast<int64_t>(std::stoll(raw, &used));
      if (used != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects an integer, got '" + raw + "'");
    }
  } else {
    v = raw;
  }
  values_[key] = coerce(k->default_value, v, key);
}

const json& ExperimentConfig::at(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  return values_.at(key);
}

double ExperimentConfig::real(const std::string& key) const { return to_real(at(key), key); }
int64_t ExperimentConfig::integer(const std::string& key) const { return at(key).get<int64_t>(); }
bool ExperimentConfig::flag(const std::string& key) const { return at(key).get<bool>(); }
std::string ExperimentConfig::text(const std::string& key) const { return at(key).get<std::string>(); }

std::vector<double> ExperimentConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& e : at(key)) out.push_back(to_real(e, key));
  return out;
}

std::filesystem::path ExperimentConfig::output_dir() const {
  if (const char* root = std::getenv("VEIL_OUTPUT_ROOT"); root && *root) return root;
  return text("output_dir");
}

trainer::TrainConfig ExperimentConfig::train_config() const {
  trainer::TrainConfig c;
  c.steps = integer("trainer.steps");
  c.codec_pretrain_steps = integer("trainer.codec_pretrain_steps");
  c.batch_size = integer("trainer.batch_size");
  c.lr_codec = real("trainer.lr_codec");
  c.lr_hiding = real("trainer.lr_hiding");
  c.lr_pretrain = real("trainer.lr_pretrain");
  c.snr_min_db = real("trainer.snr_min_db");
  c.snr_max_db = real("trainer.snr_max_db");
  c.capacity_ratio = real("trainer.capacity_ratio");
  c.grad_clip_norm = real("trainer.grad_clip_norm");
  c.eval_every = integer("trainer.eval_every");
  c.eval_snr_db = real("trainer.eval_snr_db");
  c.seed = seed();
  c.deterministic = flag("deterministic");
  c.hiding.latent_dim = integer("hiding.latent_dim");
  c.hiding.depth = integer("hiding.depth");
  c.hiding.attention_heads = integer("hiding.attention_heads");
  c.validate();
  return c;
}

losses::LossWeights ExperimentConfig::loss_weights() const {
  losses::LossWeights w{real("losses.cover"),    real("losses.secret"),    real("losses.perceptual"),
                        real("losses.kl_cover"), real("losses.kl_secret"), real("losses.embedding"),
                        real("losses.null")};
  w.validate();
  return w;
}

adversary::AttackConfig ExperimentConfig::attack_config() const {
  adversary::AttackConfig a;
  a.epsilon = real("adversary.epsilon");
  a.steps = integer("adversary.pgd_steps");
  a.step_size = real("adversary.pgd_step_size");
  a.cover_penalty_beta = real("adversary.beta");
  a.validate();
  return a;
}

adversary::DetectorConfig ExperimentConfig::detector_config() const {
  adversary::DetectorConfig d;
  d.epochs = integer("adversary.epochs");
  d.batch_size = integer("adversary.batch_size");
  d.learning_rate = real("adversary.lr");
  d.seed = seed();
  if (d.epochs < 1 || d.batch_size < 1 || !(d.learning_rate > 0)) {
    throw ConfigError("detector epochs, batch size and learning rate must be positive");
  }
  return d;
}

}  // namespace veil
