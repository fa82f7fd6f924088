#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sample/dual_encoder.hpp"
#include "sample/encoder.hpp"
#include "sample/fusion.hpp"
#include "sample/prompt.hpp"

namespace sample {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PromptSettings {
  // -1 means "kind-appropriate default", resolved in normalize_and_validate():
  // preset 5 when the template itself is discrete, preset 4 as the mixed
  // core, t = 4 soft tokens for continuous templates.
  PromptKind kind = PromptKind::kMixed;
  int preset_index = -1;
  int t = -1;
  SoftInit soft_init = SoftInit::kRandom;

  static constexpr int kDefaultDiscretePreset = 5;  // best-scoring surface form
  static constexpr int kDefaultMixedCorePreset = 4;
  static constexpr int kDefaultSoftCount = 4;
};

enum class ProtocolKind { kFewShot, kDataRich };

struct ProtocolSettings {
  ProtocolKind kind = ProtocolKind::kFewShot;
  std::vector<int> k_list = {2, 4, 8, 16, 100};
  int n_seeds = 5;
};

struct ModelDims {
  int d_lm = 64;
  int d_img = 64;
  int num_layers = 2;
  int num_heads = 4;
  int feedforward_dim = 128;
  int max_seq_len = 64;
  int patch_size = 4;
  int shared_dim = 64;
};

struct PretrainSettings {
  int mlm_epochs = 15;
  int contrastive_epochs = 15;
  int batch_size = 16;
  float learning_rate = 1e-3f;
  float weight_decay = 1e-4f;
  float temperature = 0.07f;
  float holdout_fraction = 0.1f;
};

struct ExperimentConfig {
  PromptSettings prompt;
  FusionConfig fusion;
  bool remove_image_feature = false;
  bool remove_text_feature = false;
  bool remove_multimodal = false;
  float learning_rate = 3e-5f;
  float weight_decay = 1e-3f;
  int epochs = 20;
  float dropout = 0.6f;
  int batch_size = 16;
  int projection_dim = 32;
  ModelDims model;
  PretrainSettings pretrain;
  ProtocolSettings protocol;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  // Fills kind-dependent defaults and checks invariants.
  void normalize_and_validate() {
    if (prompt.preset_index < 0) {
      prompt.preset_index = prompt.kind == PromptKind::kMixed
                                ? PromptSettings::kDefaultMixedCorePreset
                                : PromptSettings::kDefaultDiscretePreset;
    }
    if (prompt.t < 0) prompt.t = PromptSettings::kDefaultSoftCount;
    if (prompt.preset_index < 1 || prompt.preset_index > 5) {
      throw ConfigError("config: prompt.preset_index must be in 1..5");
    }
    if (prompt.kind == PromptKind::kContinuous &&
        (prompt.t < 1 || prompt.t > Vocab::kSoftSlots)) {
      throw ConfigError("config: prompt.t must be in 1.." +
                        std::to_string(Vocab::kSoftSlots) + " for continuous templates");
    }
    const int ablations = static_cast<int>(remove_image_feature) +
                          static_cast<int>(remove_text_feature) +
                          static_cast<int>(remove_multimodal);
    if (ablations > 1) {
      throw ConfigError("config: at most one of remove_image_feature, "
                        "remove_text_feature, remove_multimodal may be set");
    }
    if (fusion.alpha < 0.0f || fusion.alpha > 1.0f) {
      throw ConfigError("config: fusion.alpha must lie in [0,1]");
    }
    if (learning_rate <= 0.0f) throw ConfigError("config: learning_rate must be positive");
    if (epochs < 1) throw ConfigError("config: epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("config: dropout must be in [0,1)");
    if (projection_dim < 1) throw ConfigError("config: projection_dim must be positive");
    if (model.d_lm % model.num_heads != 0 || model.d_img % model.num_heads != 0) {
      throw ConfigError("config: model dims must be divisible by num_heads");
    }
    if (protocol.kind == ProtocolKind::kFewShot && protocol.k_list.empty()) {
      throw ConfigError("config: protocol.k_list must not be empty for few_shot");
    }
    if (protocol.n_seeds < 1) throw ConfigError("config: protocol.n_seeds must be positive");
    if (seeds.empty()) {
      for (int i = 1; i <= protocol.n_seeds; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    }
    if (static_cast<int>(seeds.size()) != protocol.n_seeds) {
      throw ConfigError("config: seeds list length " + std::to_string(seeds.size()) +
                        " disagrees with protocol.n_seeds " +
                        std::to_string(protocol.n_seeds));
    }
  }

  TextEncoderConfig text_encoder_config(int vocab_size) const {
    TextEncoderConfig c;
    c.vocab_size = vocab_size;
    c.d_lm = model.d_lm;
    c.num_layers = model.num_layers;
    c.num_heads = model.num_heads;
    c.feedforward_dim = model.feedforward_dim;
    c.max_seq_len = model.max_seq_len;
    return c;
  }

  ImageEncoderConfig image_encoder_config(int image_side) const {
    ImageEncoderConfig c;
    c.patch_size = model.patch_size;
    c.d_img = model.d_img;
    c.num_layers = model.num_layers;
    c.num_heads = model.num_heads;
    c.feedforward_dim = model.feedforward_dim;
    c.image_side = image_side;
    return c;
  }

  DualEncoderConfig dual_encoder_config(int vocab_size, int image_side) const {
    DualEncoderConfig c;
    c.text = text_encoder_config(vocab_size);
    c.image = image_encoder_config(image_side);
    c.shared_dim = model.shared_dim;
    return c;
  }
};

// ---------------------------------------------------------------------------
// JSON round-trip (field names are the public configuration interface)

namespace detail {

inline PromptKind prompt_kind_of(const std::string& s) {
  if (s == "discrete") return PromptKind::kDiscrete;
  if (s == "continuous") return PromptKind::kContinuous;
  if (s == "mixed") return PromptKind::kMixed;
  throw ConfigError("config: unknown prompt kind '" + s + "'");
}

inline SoftInit soft_init_of(const std::string& s) {
  if (s == "random") return SoftInit::kRandom;
  if (s == "fc") return SoftInit::kFc;
  if (s == "lstm") return SoftInit::kLstm;
  throw ConfigError("config: unknown soft_init '" + s + "'");
}

inline FusionStrategy strategy_of(const std::string& s) {
  if (s == "CONCAT") return FusionStrategy::kConcat;
  if (s == "MAX") return FusionStrategy::kMax;
  if (s == "AVG") return FusionStrategy::kAvg;
  if (s == "PRODUCT") return FusionStrategy::kProduct;
  throw ConfigError("config: unknown fusion strategy '" + s + "'");
}

inline ProtocolKind protocol_kind_of(const std::string& s) {
  if (s == "few_shot") return ProtocolKind::kFewShot;
  if (s == "data_rich") return ProtocolKind::kDataRich;
  throw ConfigError("config: unknown protocol kind '" + s + "'");
}

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["prompt"] = {{"kind", to_string(cfg.prompt.kind)},
                 {"preset_index", cfg.prompt.preset_index},
                 {"t", cfg.prompt.t},
                 {"soft_init", to_string(cfg.prompt.soft_init)}};
  j["fusion"] = {{"strategy", to_string(cfg.fusion.strategy)},
                 {"alpha", cfg.fusion.alpha},
                 {"gate_enabled", cfg.fusion.gate_enabled}};
  j["remove_image_feature"] = cfg.remove_image_feature;
  j["remove_text_feature"] = cfg.remove_text_feature;
  j["remove_multimodal"] = cfg.remove_multimodal;
  j["learning_rate"] = cfg.learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["dropout"] = cfg.dropout;
  j["batch_size"] = cfg.batch_size;
  j["projection_dim"] = cfg.projection_dim;
  j["model"] = {{"d_lm", cfg.model.d_lm},
                {"d_img", cfg.model.d_img},
                {"num_layers", cfg.model.num_layers},
                {"num_heads", cfg.model.num_heads},
                {"feedforward_dim", cfg.model.feedforward_dim},
                {"max_seq_len", cfg.model.max_seq_len},
                {"patch_size", cfg.model.patch_size},
                {"shared_dim", cfg.model.shared_dim}};
  j["pretrain"] = {{"mlm_epochs", cfg.pretrain.mlm_epochs},
                   {"contrastive_epochs", cfg.pretrain.contrastive_epochs},
                   {"batch_size", cfg.pretrain.batch_size},
                   {"learning_rate", cfg.pretrain.learning_rate},
                   {"weight_decay", cfg.pretrain.weight_decay},
                   {"temperature", cfg.pretrain.temperature},
                   {"holdout_fraction", cfg.pretrain.holdout_fraction}};
  nlohmann::ordered_json protocol;
  protocol["kind"] = cfg.protocol.kind == ProtocolKind::kFewShot ? "few_shot" : "data_rich";
  if (cfg.protocol.kind == ProtocolKind::kFewShot) protocol["k_list"] = cfg.protocol.k_list;
  protocol["n_seeds"] = cfg.protocol.n_seeds;
  j["protocol"] = protocol;
  j["seeds"] = cfg.seeds;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.seeds.clear();  // rebuilt from json or n_seeds
  try {
    if (j.contains("prompt")) {
      const auto& p = j.at("prompt");
      if (p.contains("kind")) cfg.prompt.kind = detail::prompt_kind_of(p.at("kind"));
      detail::maybe_get(p, "preset_index", cfg.prompt.preset_index);
      detail::maybe_get(p, "t", cfg.prompt.t);
      if (p.contains("soft_init")) cfg.prompt.soft_init = detail::soft_init_of(p.at("soft_init"));
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      if (f.contains("strategy")) cfg.fusion.strategy = detail::strategy_of(f.at("strategy"));
      detail::maybe_get(f, "alpha", cfg.fusion.alpha);
      detail::maybe_get(f, "gate_enabled", cfg.fusion.gate_enabled);
    }
    detail::maybe_get(j, "remove_image_feature", cfg.remove_image_feature);
    detail::maybe_get(j, "remove_text_feature", cfg.remove_text_feature);
    detail::maybe_get(j, "remove_multimodal", cfg.remove_multimodal);
    detail::maybe_get(j, "learning_rate", cfg.learning_rate);
    detail::maybe_get(j, "weight_decay", cfg.weight_decay);
    detail::maybe_get(j, "epochs", cfg.epochs);
    detail::maybe_get(j, "dropout", cfg.dropout);
    detail::maybe_get(j, "batch_size", cfg.batch_size);
    detail::maybe_get(j, "projection_dim", cfg.projection_dim);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::maybe_get(m, "d_lm", cfg.model.d_lm);
      detail::maybe_get(m, "d_img", cfg.model.d_img);
      detail::maybe_get(m, "num_layers", cfg.model.num_layers);
      detail::maybe_get(m, "num_heads", cfg.model.num_heads);
      detail::maybe_get(m, "feedforward_dim", cfg.model.feedforward_dim);
      detail::maybe_get(m, "max_seq_len", cfg.model.max_seq_len);
      detail::maybe_get(m, "patch_size", cfg.model.patch_size);
      detail::maybe_get(m, "shared_dim", cfg.model.shared_dim);
    }
    if (j.contains("pretrain")) {
      const auto& p = j.at("pretrain");
      detail::maybe_get(p, "mlm_epochs", cfg.pretrain.mlm_epochs);
      detail::maybe_get(p, "contrastive_epochs", cfg.pretrain.contrastive_epochs);
      detail::maybe_get(p, "batch_size", cfg.pretrain.batch_size);
      detail::maybe_get(p, "learning_rate", cfg.pretrain.learning_rate);
      detail::maybe_get(p, "weight_decay", cfg.pretrain.weight_decay);
      detail::maybe_get(p, "temperature", cfg.pretrain.temperature);
      detail::maybe_get(p, "holdout_fraction", cfg.pretrain.holdout_fraction);
    }
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      if (p.contains("kind")) cfg.protocol.kind = detail::protocol_kind_of(p.at("kind"));
      detail::maybe_get(p, "k_list", cfg.protocol.k_list);
      detail::maybe_get(p, "n_seeds", cfg.protocol.n_seeds);
    }
    detail::maybe_get(j, "seeds", cfg.seeds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: malformed json: ") + e.what());
  }
  cfg.normalize_and_validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: cannot parse " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// FNV-1a over the canonical serialized form; stable across runs and builds.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string canonical = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash_hex(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  return std::string(buf);
}

}  // namespace sample
