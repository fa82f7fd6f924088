#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sample/image.hpp"
#include "sample/prompt.hpp"
#include "sample/rng.hpp"
#include "sample/vocab.hpp"

namespace sample {

struct NewsInstance {
  std::string id;
  std::string text;
  int label = kLabelUnset;  // 0 real, 1 fake
  std::vector<std::string> image_files;
  std::vector<ImageGray> images;
  std::vector<int> token_ids;  // tokenized text, filled at load time

  static constexpr int kLabelUnset = -1;
};

struct DatasetManifest {
  std::string instances_path;
  std::string images_dir;
  std::string vocab_path;

  static DatasetManifest for_dir(const std::string& dir) {
    DatasetManifest m;
    m.instances_path = dir + "/instances.jsonl";
    m.images_dir = dir + "/images";
    m.vocab_path = dir + "/vocab.txt";
    return m;
  }
};

struct Dataset {
  std::vector<NewsInstance> instances;
  Vocab vocab;

  std::vector<int> indices_of_label(int label) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < instances.size(); ++i)
      if (instances[i].label == label) out.push_back(static_cast<int>(i));
    return out;
  }
};

inline int parse_label(const std::string& s) {
  if (s == "real") return 0;
  if (s == "fake") return 1;
  throw DataError("dataset: unknown label '" + s + "' (expected real or fake)");
}

inline const char* label_name(int label) { return label == 0 ? "real" : "fake"; }

// Loads instances.jsonl + images/ + vocab.txt. Instances whose images are all
// unreadable (or absent) are dropped with a warning; a broken instances file
// is fatal.
inline Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset ds;
  ds.vocab = Vocab::load(manifest.vocab_path);
  std::ifstream in(manifest.instances_path);
  if (!in) throw DataError("dataset: cannot open " + manifest.instances_path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("dataset: bad json at " + manifest.instances_path + ":" +
                      std::to_string(line_no) + ": " + e.what());
    }
    NewsInstance inst;
    try {
      inst.id = j.at("id").get<std::string>();
      inst.text = j.at("text").get<std::string>();
      inst.label = parse_label(j.at("label").get<std::string>());
      inst.image_files = j.at("images").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dataset: missing field at " + manifest.instances_path + ":" +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (inst.text.empty()) {
      throw DataError("dataset: empty text for instance " + inst.id);
    }
    std::vector<std::string> readable_files;
    for (const auto& file : inst.image_files) {
      const std::string path = manifest.images_dir + "/" + file;
      try {
        inst.images.push_back(read_pgm(path));
        readable_files.push_back(file);
      } catch (const DataError& e) {
        std::cerr << "warning: skipping image " << path << " (" << e.what() << ")\n";
      }
    }
    inst.image_files = readable_files;
    if (inst.images.empty()) {
      std::cerr << "warning: dropping instance " << inst.id << " with no readable images\n";
      continue;
    }
    inst.token_ids = ds.vocab.encode(tokenize(inst.text));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation

struct SyntheticGenConfig {
  int n_real = 600;
  int n_fake = 600;
  int topics = 4;
  int vocab_target = 200;
  int image_side = 16;
  double mismatch_fraction = 0.5;  // fakes detectable only cross-modally
  double marker_fraction = 0.5;    // fakes carrying the textual marker token
  double noise_level = 0.15;
  std::uint64_t seed = 13;

  void validate() const {
    if (n_real < 0 || n_fake < 0 || topics < 2)
      throw std::invalid_argument("synthetic config: need topics >= 2 and non-negative counts");
    if (std::fabs(mismatch_fraction + marker_fraction - 1.0) > 1e-9)
      throw std::invalid_argument(
          "synthetic config: mismatch_fraction + marker_fraction must equal 1");
    if (image_side <= 0) throw std::invalid_argument("synthetic config: bad image side");
  }
};

namespace detail {

inline std::string marker_token() { return "marker0"; }

// Per-topic grayscale motif in [0,1]; four base patterns cycled with a
// topic-dependent period so any topic count stays distinguishable.
inline double topic_motif(int topic, int x, int y, int side) {
  const int kind = topic % 4;
  const int variant = topic / 4 + 1;
  const double fx = static_cast<double>(x) / (side - 1);
  const double fy = static_cast<double>(y) / (side - 1);
  switch (kind) {
    case 0: return fx;                                          // horizontal ramp
    case 1: return ((x / (2 * variant)) % 2 == 0) ? 1.0 : 0.0;  // vertical stripes
    case 2: return (((x / (4 * variant)) + (y / (4 * variant))) % 2 == 0) ? 1.0 : 0.0;
    default: {                                                  // centered blob
      const double dx = fx - 0.5, dy = fy - 0.5;
      return std::exp(-(dx * dx + dy * dy) / (0.08 * variant));
    }
  }
}

inline ImageGray render_topic_image(int topic, const SyntheticGenConfig& cfg, SeededRng& rng) {
  ImageGray img;
  img.width = cfg.image_side;
  img.height = cfg.image_side;
  img.pixels.resize(static_cast<std::size_t>(cfg.image_side) * cfg.image_side);
  for (int y = 0; y < cfg.image_side; ++y)
    for (int x = 0; x < cfg.image_side; ++x) {
      const double base = topic_motif(topic, x, y, cfg.image_side);
      const double noisy =
          0.15 + 0.7 * base + cfg.noise_level * rng.uniform(-1.0f, 1.0f);
      const int byte = static_cast<int>(std::lround(255.0 * std::clamp(noisy, 0.0, 1.0)));
      img.pixels[static_cast<std::size_t>(y) * cfg.image_side + x] =
          static_cast<std::uint8_t>(byte);
    }
  return img;
}

struct SyntheticVocabulary {
  Vocab vocab;
  std::vector<std::vector<std::string>> topic_words;
  std::vector<std::string> common_words;
};

inline SyntheticVocabulary build_synthetic_vocab(const SyntheticGenConfig& cfg) {
  SyntheticVocabulary sv;
  for (const auto& surface : discrete_preset_surfaces())
    for (const auto& word : tokenize(surface))
      if (word != Vocab::mask_token()) sv.vocab.add(word);
  sv.vocab.add(marker_token());
  const int n_common = 8;
  for (int i = 0; i < n_common; ++i) {
    sv.common_words.push_back("common" + std::to_string(i));
    sv.vocab.add(sv.common_words.back());
  }
  const int remaining = std::max(cfg.topics, cfg.vocab_target - sv.vocab.size());
  const int per_topic = std::max(1, remaining / cfg.topics);
  sv.topic_words.resize(static_cast<std::size_t>(cfg.topics));
  for (int t = 0; t < cfg.topics; ++t)
    for (int w = 0; w < per_topic; ++w) {
      std::string word = "t" + std::to_string(t) + "w" + std::to_string(w);
      sv.topic_words[static_cast<std::size_t>(t)].push_back(word);
      sv.vocab.add(word);
    }
  return sv;
}

inline std::string sample_topic_text(const SyntheticVocabulary& sv, int topic,
                                     SeededRng& rng) {
  const int length = rng.uniform_int(18, 28);
  std::string text;
  const auto& pool = sv.topic_words[static_cast<std::size_t>(topic)];
  for (int i = 0; i < length; ++i) {
    const std::string& word =
        rng.uniform01() < 0.8
            ? pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]
            : sv.common_words[static_cast<std::size_t>(
                  rng.uniform_int(0, static_cast<int>(sv.common_words.size()) - 1))];
    if (!text.empty()) text += " ";
    text += word;
  }
  return text;
}

inline std::string insert_marker(const std::string& text, SeededRng& rng) {
  std::vector<std::string> words = tokenize(text);
  for (int rep = 0; rep < 2; ++rep) {
    const int pos = rng.uniform_int(0, static_cast<int>(words.size()));
    words.insert(words.begin() + pos, marker_token());
  }
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += " ";
    out += w;
  }
  return out;
}

}  // namespace detail

// Writes instances.jsonl, images/*.pgm, vocab.txt. A pure function of the
// config: identical configs give byte-identical output trees.
//
// Real items pair topic-z text with a topic-z image. Fake items either carry
// the textual marker token (image still matches) or pair topic-z text with a
// topic-z' image, z' != z, which only a cross-modal reader can spot.
inline void generate_synthetic(const SyntheticGenConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  SeededRng rng(cfg.seed);
  std::filesystem::create_directories(out_dir + "/images");
  detail::SyntheticVocabulary sv = detail::build_synthetic_vocab(cfg);

  const int n_marker = static_cast<int>(std::lround(cfg.marker_fraction * cfg.n_fake));
  std::vector<int> fake_kind(static_cast<std::size_t>(cfg.n_fake), 0);  // 0 marker, 1 mismatch
  for (int i = n_marker; i < cfg.n_fake; ++i) fake_kind[static_cast<std::size_t>(i)] = 1;
  rng.shuffle(fake_kind);

  std::ofstream out(out_dir + "/instances.jsonl");
  if (!out) throw DataError("generate_synthetic: cannot write to " + out_dir);

  const int total = cfg.n_real + cfg.n_fake;
  for (int i = 0; i < total; ++i) {
    const bool is_fake = i >= cfg.n_real;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "n%04d", i);
    NewsInstance inst;
    inst.id = idbuf;
    const int text_topic = rng.uniform_int(0, cfg.topics - 1);
    int image_topic = text_topic;
    inst.label = is_fake ? 1 : 0;
    inst.text = detail::sample_topic_text(sv, text_topic, rng);
    if (is_fake) {
      const int kind = fake_kind[static_cast<std::size_t>(i - cfg.n_real)];
      if (kind == 0) {
        inst.text = detail::insert_marker(inst.text, rng);
      } else {
        image_topic = (text_topic + 1 + rng.uniform_int(0, cfg.topics - 2)) % cfg.topics;
      }
    }
    const int extra_images = rng.bernoulli(0.3) ? 1 : 0;
    for (int img_idx = 0; img_idx <= extra_images; ++img_idx) {
      ImageGray img = detail::render_topic_image(image_topic, cfg, rng);
      const std::string file = inst.id + "_" + std::to_string(img_idx) + ".pgm";
      write_pgm(out_dir + "/images/" + file, img);
      inst.image_files.push_back(file);
    }
    nlohmann::ordered_json j;
    j["id"] = inst.id;
    j["text"] = inst.text;
    j["label"] = label_name(inst.label);
    j["images"] = inst.image_files;
    out << j.dump() << "\n";
  }
  sv.vocab.save(out_dir + "/vocab.txt");
}

// ---------------------------------------------------------------------------
// Sampling protocols

enum class PlanKind { kFewShot, kHundredShotSmall, kDataRich };

struct SplitPlan {
  PlanKind kind = PlanKind::kFewShot;
  int k = -1;
  std::uint64_t seed = 0;
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;

  std::string setting_name() const {
    if (kind == PlanKind::kDataRich) return "datarich";
    return "k" + std::to_string(k);
  }
};

namespace detail {

inline std::vector<int> remaining_indices(int total, const std::vector<int>& used_a,
                                          const std::vector<int>& used_b) {
  std::vector<char> used(static_cast<std::size_t>(total), 0);
  for (int i : used_a) used[static_cast<std::size_t>(i)] = 1;
  for (int i : used_b) used[static_cast<std::size_t>(i)] = 1;
  std::vector<int> rest;
  for (int i = 0; i < total; ++i)
    if (!used[static_cast<std::size_t>(i)]) rest.push_back(i);
  return rest;
}

}  // namespace detail

// k labelled instances per class for training, the same for validation, the
// rest for test. k=100 on a dataset too small for that falls back to the
// 100-train/50-validation total split, class-balanced as far as counts allow.
inline SplitPlan sample_few_shot(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("sample_few_shot: k must be positive");
  SeededRng rng(seed);
  std::vector<std::vector<int>> per_class = {dataset.indices_of_label(0),
                                             dataset.indices_of_label(1)};
  for (auto& cls : per_class) rng.shuffle(cls);

  SplitPlan plan;
  plan.k = k;
  plan.seed = seed;

  const bool regular_fits =
      std::all_of(per_class.begin(), per_class.end(), [k](const std::vector<int>& cls) {
        return static_cast<int>(cls.size()) >= 2 * k;
      });
  if (regular_fits) {
    plan.kind = PlanKind::kFewShot;
    for (const auto& cls : per_class)
      plan.train.insert(plan.train.end(), cls.begin(), cls.begin() + k);
    for (const auto& cls : per_class)
      plan.validation.insert(plan.validation.end(), cls.begin() + k, cls.begin() + 2 * k);
  } else if (k == 100) {
    // Small-dataset hundred-shot: 100 train / 50 validation in total.
    plan.kind = PlanKind::kHundredShotSmall;
    const int want_train = 100, want_val = 50;
    if (static_cast<int>(dataset.instances.size()) < want_train + want_val) {
      throw DataError("sample_few_shot: dataset of " +
                      std::to_string(dataset.instances.size()) +
                      " cannot provide 100 train + 50 validation instances");
    }
    std::vector<std::size_t> cursor(per_class.size(), 0);
    auto draw_balanced = [&](std::vector<int>& dst, int want) {
      const int quota = want / static_cast<int>(per_class.size());
      for (std::size_t c = 0; c < per_class.size(); ++c) {
        const int take = std::min<int>(quota,
            static_cast<int>(per_class[c].size() - cursor[c]));
        for (int i = 0; i < take; ++i) dst.push_back(per_class[c][cursor[c]++]);
      }
      // fill any deficit from whatever classes still have instances
      std::size_t c = 0;
      while (static_cast<int>(dst.size()) < want && c < per_class.size()) {
        if (cursor[c] < per_class[c].size()) {
          dst.push_back(per_class[c][cursor[c]++]);
        } else {
          ++c;
        }
      }
    };
    draw_balanced(plan.train, want_train);
    draw_balanced(plan.validation, want_val);
  } else {
    throw DataError("sample_few_shot: a class has fewer than " + std::to_string(2 * k) +
                    " instances for k=" + std::to_string(k));
  }
  plan.test = detail::remaining_indices(static_cast<int>(dataset.instances.size()),
                                        plan.train, plan.validation);
  return plan;
}

// Shuffled 8:1:1 split.
inline SplitPlan split_data_rich(const Dataset& dataset, std::uint64_t seed) {
  const int n = static_cast<int>(dataset.instances.size());
  if (n < 10) throw DataError("split_data_rich: need at least 10 instances, have " +
                              std::to_string(n));
  SeededRng rng(seed);
  std::vector<int> order = rng.permutation(n);
  const int n_train = static_cast<int>(std::floor(0.8 * n));
  const int n_val = static_cast<int>(std::floor(0.1 * n));
  SplitPlan plan;
  plan.kind = PlanKind::kDataRich;
  plan.seed = seed;
  plan.train.assign(order.begin(), order.begin() + n_train);
  plan.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  plan.test.assign(order.begin() + n_train + n_val, order.end());
  return plan;
}

}  // namespace sample
