#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sample/checkpoint.hpp"
#include "sample/config.hpp"
#include "sample/data.hpp"
#include "sample/metrics.hpp"
#include "sample/model.hpp"
#include "sample/optim.hpp"

namespace sample {

// Stream-splitting constants so that model init, data order, and dropout
// draw from independent deterministic streams of one trial seed.
constexpr std::uint64_t kInitStream = 0x7f4a7c15a5a5a5a5ULL;
constexpr std::uint64_t kDataStream = 0x3c6ef372fe94f82bULL;
constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

struct PretrainedEncoders {
  TextEncoder mlm_encoder;
  MlmHead mlm_head;
  DualEncoder dual;
  double mlm_heldout_accuracy = 0.0;
  double mlm_majority_baseline = 0.0;
  ContrastiveStats contrastive_heldout;
  int image_side = 16;

  void freeze() {
    mlm_encoder.set_trainable(false);
    NamedParams head;
    mlm_head.collect_params("mlm.head", head);
    set_trainable(head, false);
    dual.set_trainable(false);
  }
};

// Runs masked-LM pretraining and contrastive dual-encoder pretraining on the
// dataset, then freezes everything.
inline PretrainedEncoders pretrain_all(const ExperimentConfig& cfg, const Dataset& dataset,
                                       std::uint64_t seed) {
  if (dataset.instances.empty()) throw DataError("pretrain: empty dataset");
  PretrainedEncoders enc;
  enc.image_side = dataset.instances.front().images.front().width;

  std::vector<std::vector<int>> corpus;
  corpus.reserve(dataset.instances.size());
  for (const auto& inst : dataset.instances) corpus.push_back(inst.token_ids);

  MlmPretrainConfig mlm_cfg;
  mlm_cfg.epochs = cfg.pretrain.mlm_epochs;
  mlm_cfg.batch_size = cfg.pretrain.batch_size;
  mlm_cfg.learning_rate = cfg.pretrain.learning_rate;
  mlm_cfg.weight_decay = cfg.pretrain.weight_decay;
  mlm_cfg.holdout_fraction = cfg.pretrain.holdout_fraction;
  SeededRng mlm_rng(seed ^ 0x11d8f12a45b935c1ULL);
  MlmPretrainResult mlm = pretrain_mlm(corpus, cfg.text_encoder_config(dataset.vocab.size()),
                                       mlm_cfg, mlm_rng);
  enc.mlm_encoder = std::move(mlm.encoder);
  enc.mlm_head = std::move(mlm.head);
  enc.mlm_heldout_accuracy = mlm.heldout_accuracy;
  enc.mlm_majority_baseline = mlm.majority_baseline;

  std::vector<ContrastivePair> pairs;
  pairs.reserve(dataset.instances.size());
  for (const auto& inst : dataset.instances) {
    ContrastivePair pair;
    pair.text_ids = inst.token_ids;
    pair.image = &inst.images.front();
    pairs.push_back(std::move(pair));
  }
  DualEncoderTrainerConfig dual_cfg;
  dual_cfg.temperature = cfg.pretrain.temperature;
  dual_cfg.batch_size = cfg.pretrain.batch_size;
  dual_cfg.epochs = cfg.pretrain.contrastive_epochs;
  dual_cfg.learning_rate = cfg.pretrain.learning_rate;
  dual_cfg.weight_decay = cfg.pretrain.weight_decay;
  dual_cfg.holdout_fraction = cfg.pretrain.holdout_fraction;
  SeededRng dual_rng(seed ^ 0x2545f4914f6cdd1dULL);
  ContrastivePretrainResult contrastive = pretrain_contrastive(
      pairs, cfg.dual_encoder_config(dataset.vocab.size(), enc.image_side), dual_cfg, dual_rng);
  enc.dual = std::move(contrastive.dual);
  enc.contrastive_heldout = contrastive.heldout;

  enc.freeze();
  return enc;
}

inline void save_encoders(const std::string& dir, const PretrainedEncoders& enc,
                          int vocab_size) {
  std::filesystem::create_directories(dir);
  NamedParams mlm_named;
  enc.mlm_encoder.collect_params("mlm", mlm_named);
  enc.mlm_head.collect_params("mlm.head", mlm_named);
  save_checkpoint(dir + "/mlm.smpl", mlm_named);
  NamedParams dual_named;
  enc.dual.collect_params("dual", dual_named);
  save_checkpoint(dir + "/dual.smpl", dual_named);

  nlohmann::ordered_json meta;
  meta["vocab_size"] = vocab_size;
  meta["image_side"] = enc.image_side;
  meta["mlm_heldout_accuracy"] = enc.mlm_heldout_accuracy;
  meta["mlm_majority_baseline"] = enc.mlm_majority_baseline;
  meta["contrastive_matched_mean"] = enc.contrastive_heldout.matched_mean;
  meta["contrastive_mismatched_mean"] = enc.contrastive_heldout.mismatched_mean;
  meta["contrastive_heldout_count"] = enc.contrastive_heldout.heldout_count;
  std::ofstream out(dir + "/meta.json");
  out << meta.dump(2) << "\n";
}

inline PretrainedEncoders load_encoders(const std::string& dir, const ExperimentConfig& cfg,
                                        int vocab_size) {
  std::ifstream meta_in(dir + "/meta.json");
  if (!meta_in) throw DataError("encoders: cannot open " + dir + "/meta.json");
  nlohmann::json meta;
  meta_in >> meta;
  if (meta.at("vocab_size").get<int>() != vocab_size) {
    throw DataError("encoders: checkpoint vocab size " +
                    std::to_string(meta.at("vocab_size").get<int>()) +
                    " does not match dataset vocab size " + std::to_string(vocab_size));
  }
  PretrainedEncoders enc;
  enc.image_side = meta.at("image_side").get<int>();
  enc.mlm_heldout_accuracy = meta.at("mlm_heldout_accuracy").get<double>();
  enc.mlm_majority_baseline = meta.at("mlm_majority_baseline").get<double>();
  enc.contrastive_heldout.matched_mean = meta.at("contrastive_matched_mean").get<double>();
  enc.contrastive_heldout.mismatched_mean = meta.at("contrastive_mismatched_mean").get<double>();
  enc.contrastive_heldout.heldout_count = meta.at("contrastive_heldout_count").get<int>();

  SeededRng scratch(0);
  enc.mlm_encoder = TextEncoder::create(cfg.text_encoder_config(vocab_size), scratch);
  enc.mlm_head = MlmHead::create(vocab_size);
  NamedParams mlm_named;
  enc.mlm_encoder.collect_params("mlm", mlm_named);
  enc.mlm_head.collect_params("mlm.head", mlm_named);
  load_checkpoint_into(dir + "/mlm.smpl", mlm_named);

  enc.dual = DualEncoder::create(cfg.dual_encoder_config(vocab_size, enc.image_side), scratch);
  NamedParams dual_named;
  enc.dual.collect_params("dual", dual_named);
  load_checkpoint_into(dir + "/dual.smpl", dual_named);

  enc.freeze();
  return enc;
}

// Frozen dual-encoder features for every instance; the highest-similarity
// image is selected here, once, exactly as the classifier will see it.
inline PreparedDataset prepare_dataset(const Dataset& dataset, const DualEncoder& dual,
                                       std::vector<std::string>* ids_out = nullptr) {
  PreparedDataset out;
  out.items.reserve(dataset.instances.size());
  if (ids_out != nullptr) ids_out->clear();
  for (const auto& inst : dataset.instances) {
    PreparedInstance item;
    item.label = inst.label;
    item.text_ids = inst.token_ids;
    item.clip_text = dual.embed_text(inst.token_ids);
    std::vector<Tensor> image_embs;
    std::vector<std::vector<float>> image_emb_values;
    image_embs.reserve(inst.images.size());
    for (const auto& img : inst.images) {
      image_embs.push_back(dual.embed_image(img));
      image_emb_values.push_back(image_embs.back().data());
    }
    item.selected_image = select_image(item.clip_text.data(), image_emb_values);
    item.clip_image = image_embs[static_cast<std::size_t>(item.selected_image)];
    out.items.push_back(std::move(item));
    if (ids_out != nullptr) ids_out->push_back(inst.id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trials

struct EpochMetric {
  int epoch = 0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::string setting;
  std::string variant;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<EpochMetric> epoch_val;
  int selected_epoch = 0;
  long long trainable_params = 0;
  std::string config_hash;
};

inline EvalMetrics evaluate_model(SampleModel& model, const std::vector<int>& indices,
                                  const PreparedDataset& data, const VariantData& variant,
                                  std::vector<int>* predictions_out = nullptr) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty instance set");
  std::vector<int> preds = model.predict_batch(indices, data, variant);
  if (predictions_out != nullptr) *predictions_out = preds;
  return macro_f1_accuracy(data.labels_of(indices), preds);
}

// One seeded training run: AdamW over the trainable parameters, per-epoch
// validation, best-macro-F1 checkpoint selection (ties keep the earlier
// epoch), final evaluation on the plan's test set.
inline TrialResult train_trial(const ExperimentConfig& cfg, const SplitPlan& plan,
                               const PreparedDataset& data, const Vocab& vocab,
                               const TextEncoder& mlm, const VariantData& variant,
                               std::uint64_t seed, const std::string& variant_name = "full",
                               SampleModel* model_out = nullptr) {
  SeededRng init_rng(seed ^ kInitStream);
  SeededRng data_rng(seed ^ kDataStream);
  SeededRng dropout_rng(seed ^ kDropoutStream);

  SampleModel model = SampleModel::create(cfg, vocab, &mlm, init_rng);
  AdamWConfig opt_cfg;
  opt_cfg.learning_rate = cfg.learning_rate;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(trainable_of(model.trainable_named()), opt_cfg);

  TrialResult result;
  result.seed = seed;
  result.setting = plan.setting_name();
  result.variant = variant_name;
  result.trainable_params = model.trainable_param_count();
  result.config_hash = config_hash_hex(cfg);

  std::vector<int> train_idx = plan.train;
  double best_f1 = -1.0;
  std::vector<std::vector<float>> best_snapshot;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    data_rng.shuffle(train_idx);
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const std::size_t stop = std::min(train_idx.size(), start + batch);
      std::vector<int> chunk(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                             train_idx.begin() + static_cast<std::ptrdiff_t>(stop));
      Tape tape;
      Tensor probs = model.forward(chunk, data, variant, &tape, dropout_rng, true);
      Tensor loss = cross_entropy_mean(probs, data.labels_of(chunk), &tape);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
    EvalMetrics val = evaluate_model(model, plan.validation, data, variant);
    result.epoch_val.push_back({epoch, val.macro_f1, val.accuracy});
    if (val.macro_f1 > best_f1) {
      best_f1 = val.macro_f1;
      best_snapshot = model.snapshot();
      result.selected_epoch = epoch;
    }
  }
  model.restore(best_snapshot);
  EvalMetrics test = evaluate_model(model, plan.test, data, variant);
  result.macro_f1 = test.macro_f1;
  result.accuracy = test.accuracy;
  if (model_out != nullptr) *model_out = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Protocols and sweeps

struct AggregateCell {
  std::string setting;
  int n_seeds = 0;
  double f1_mean = 0.0;
  double f1_std = 0.0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  std::vector<TrialResult> trials;
};

struct AggregateReport {
  std::string variant;
  std::string config_hash;
  std::vector<AggregateCell> cells;
};

inline AggregateCell aggregate_cell(const std::string& setting,
                                    std::vector<TrialResult> trials) {
  AggregateCell cell;
  cell.setting = setting;
  cell.n_seeds = static_cast<int>(trials.size());
  std::vector<double> f1s, accs;
  for (const auto& t : trials) {
    f1s.push_back(t.macro_f1);
    accs.push_back(t.accuracy);
  }
  // Trimmed mean needs at least 3 runs; smaller sweeps fall back to the mean.
  cell.f1_mean = f1s.size() >= 3 ? trimmed_mean(f1s) : plain_mean(f1s);
  cell.acc_mean = accs.size() >= 3 ? trimmed_mean(accs) : plain_mean(accs);
  cell.f1_std = population_stddev(f1s);
  cell.acc_std = population_stddev(accs);
  cell.trials = std::move(trials);
  return cell;
}

inline SplitPlan plan_for(const ExperimentConfig& cfg, const Dataset& dataset, int k,
                          std::uint64_t seed) {
  if (cfg.protocol.kind == ProtocolKind::kDataRich) return split_data_rich(dataset, seed);
  return sample_few_shot(dataset, k, seed);
}

inline AggregateReport run_protocol(const ExperimentConfig& cfg, const Dataset& dataset,
                                    const PreparedDataset& data, const TextEncoder& mlm,
                                    const std::string& variant_name = "full") {
  AggregateReport report;
  report.variant = variant_name;
  report.config_hash = config_hash_hex(cfg);

  SeededRng scratch(0);
  SampleModel proto = SampleModel::create(cfg, dataset.vocab, &mlm, scratch);
  const VariantData variant = proto.prepare_variant(data);

  std::vector<int> settings;
  if (cfg.protocol.kind == ProtocolKind::kFewShot) {
    settings = cfg.protocol.k_list;
  } else {
    settings = {-1};
  }
  for (int k : settings) {
    std::vector<TrialResult> trials;
    bool skipped = false;
    for (std::uint64_t seed : cfg.seeds) {
      SplitPlan plan;
      try {
        plan = plan_for(cfg, dataset, k, seed);
      } catch (const DataError& e) {
        std::cerr << "warning: skipping setting k=" << k << " (" << e.what() << ")\n";
        skipped = true;
        break;
      }
      trials.push_back(
          train_trial(cfg, plan, data, dataset.vocab, mlm, variant, seed, variant_name));
    }
    if (!skipped && !trials.empty()) {
      report.cells.push_back(aggregate_cell(trials.front().setting, std::move(trials)));
    }
  }
  return report;
}

struct SweepReport {
  std::string sweep;
  std::vector<AggregateReport> reports;
};

inline const std::vector<float>& alpha_grid() {
  static const std::vector<float> grid = {0.0f, 0.2f, 0.4f, 0.6f, 0.8f, 1.0f};
  return grid;
}

// All sweeps share the base config's seeds, so every variant sees identical
// sampled plans.
inline SweepReport run_sweep(const std::string& sweep, const ExperimentConfig& base,
                             const Dataset& dataset, const PreparedDataset& data,
                             const TextEncoder& mlm) {
  SweepReport out;
  out.sweep = sweep;
  auto run_variant = [&](const ExperimentConfig& cfg, const std::string& name) {
    ExperimentConfig validated = cfg;
    validated.normalize_and_validate();
    out.reports.push_back(run_protocol(validated, dataset, data, mlm, name));
  };
  if (sweep == "components") {
    run_variant(base, "full");
    ExperimentConfig sa = base;
    sa.fusion.gate_enabled = false;
    run_variant(sa, "-SA");
    ExperimentConfig ifv = base;
    ifv.remove_image_feature = true;
    run_variant(ifv, "-IF");
    ExperimentConfig tf = base;
    tf.remove_text_feature = true;
    run_variant(tf, "-TF");
    ExperimentConfig mf = base;
    mf.remove_multimodal = true;
    run_variant(mf, "-MF");
  } else if (sweep == "alpha") {
    for (float alpha : alpha_grid()) {
      ExperimentConfig cfg = base;
      cfg.fusion.alpha = alpha;
      char name[32];
      std::snprintf(name, sizeof(name), "alpha=%.1f", alpha);
      run_variant(cfg, name);
    }
  } else if (sweep == "strategy") {
    for (FusionStrategy s : {FusionStrategy::kConcat, FusionStrategy::kMax,
                             FusionStrategy::kAvg, FusionStrategy::kProduct}) {
      ExperimentConfig cfg = base;
      cfg.fusion.strategy = s;
      run_variant(cfg, to_string(s));
    }
  } else if (sweep == "template") {
    for (int preset = 1; preset <= 5; ++preset) {
      ExperimentConfig cfg = base;
      cfg.prompt.kind = PromptKind::kDiscrete;
      cfg.prompt.preset_index = preset;
      run_variant(cfg, "template=" + std::to_string(preset));
    }
  } else if (sweep == "init") {
    for (SoftInit init : {SoftInit::kRandom, SoftInit::kFc, SoftInit::kLstm}) {
      ExperimentConfig cfg = base;
      cfg.prompt.kind = PromptKind::kContinuous;
      cfg.prompt.soft_init = init;
      run_variant(cfg, std::string("init=") + to_string(init));
    }
  } else {
    throw ConfigError("unknown sweep '" + sweep + "'");
  }
  return out;
}

inline std::vector<SweepReport> run_ablations(const ExperimentConfig& base,
                                              const Dataset& dataset,
                                              const PreparedDataset& data,
                                              const TextEncoder& mlm,
                                              const std::vector<std::string>& sweeps) {
  std::vector<SweepReport> out;
  for (const auto& sweep : sweeps) out.push_back(run_sweep(sweep, base, dataset, data, mlm));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence and report emission

namespace detail {

inline std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

inline nlohmann::ordered_json trial_to_json(const TrialResult& t) {
  nlohmann::ordered_json j;
  j["variant"] = t.variant;
  j["setting"] = t.setting;
  j["seed"] = t.seed;
  j["macro_f1"] = t.macro_f1;
  j["accuracy"] = t.accuracy;
  j["selected_epoch"] = t.selected_epoch;
  j["trainable_params"] = t.trainable_params;
  j["config_hash"] = t.config_hash;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : t.epoch_val) {
    epochs.push_back({{"epoch", e.epoch}, {"macro_f1", e.macro_f1}, {"accuracy", e.accuracy}});
  }
  j["epoch_val"] = epochs;
  return j;
}

inline TrialResult trial_from_json(const nlohmann::json& j) {
  TrialResult t;
  t.variant = j.at("variant").get<std::string>();
  t.setting = j.at("setting").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.macro_f1 = j.at("macro_f1").get<double>();
  t.accuracy = j.at("accuracy").get<double>();
  t.selected_epoch = j.at("selected_epoch").get<int>();
  t.trainable_params = j.at("trainable_params").get<long long>();
  t.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& e : j.at("epoch_val")) {
    t.epoch_val.push_back({e.at("epoch").get<int>(), e.at("macro_f1").get<double>(),
                           e.at("accuracy").get<double>()});
  }
  return t;
}

inline std::string trial_filename(const TrialResult& t) {
  return "trial_" + t.variant + "_" + t.setting + "_seed" + std::to_string(t.seed) + ".json";
}

inline void write_trials(const std::string& dir, const std::vector<SweepReport>& sweeps) {
  std::filesystem::create_directories(dir);
  for (const auto& sweep : sweeps)
    for (const auto& report : sweep.reports)
      for (const auto& cell : report.cells)
        for (const auto& trial : cell.trials) {
          std::ofstream out(dir + "/" + trial_filename(trial));
          out << trial_to_json(trial).dump(2) << "\n";
        }
}

inline std::vector<TrialResult> read_trials(const std::string& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("report: trial directory " + dir + " does not exist");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TrialResult> out;
  for (const auto& file : files) {
    std::ifstream in(file);
    nlohmann::json j;
    in >> j;
    out.push_back(trial_from_json(j));
  }
  return out;
}

// Rebuilds sweep-shaped aggregates from persisted trials (variant order by
// first appearance in filename-sorted order).
inline std::vector<SweepReport> reports_from_trials(const std::vector<TrialResult>& trials) {
  std::vector<std::string> variant_order;
  std::map<std::string, std::vector<std::string>> setting_order;
  std::map<std::string, std::map<std::string, std::vector<TrialResult>>> grouped;
  for (const auto& t : trials) {
    if (grouped.find(t.variant) == grouped.end()) variant_order.push_back(t.variant);
    auto& by_setting = grouped[t.variant];
    if (by_setting.find(t.setting) == by_setting.end())
      setting_order[t.variant].push_back(t.setting);
    by_setting[t.setting].push_back(t);
  }
  SweepReport sweep;
  sweep.sweep = "persisted";
  for (const auto& variant : variant_order) {
    AggregateReport report;
    report.variant = variant;
    report.config_hash = grouped[variant].begin()->second.front().config_hash;
    for (const auto& setting : setting_order[variant]) {
      report.cells.push_back(aggregate_cell(setting, grouped[variant][setting]));
    }
    sweep.reports.push_back(std::move(report));
  }
  return {sweep};
}

inline std::string report_header_lines(const std::string& comment_prefix) {
  std::string out;
  out += comment_prefix + " k interpretation: k labelled instances per class for train and "
         "for validation each\n";
  out += comment_prefix + " aggregation: trimmed mean over seeds (one max and one min "
         "occurrence removed when n_seeds >= 3, plain mean otherwise)\n";
  out += comment_prefix + " stddev: population standard deviation over all seeds\n";
  return out;
}

inline void emit_report_csv(const std::string& path, const std::vector<SweepReport>& sweeps) {
  std::ofstream out(path);
  out << report_header_lines("#");
  out << "sweep,variant,setting,config_hash,n_seeds,f1,f1_std,acc,acc_std\n";
  for (const auto& sweep : sweeps)
    for (const auto& report : sweep.reports)
      for (const auto& cell : report.cells) {
        out << sweep.sweep << "," << report.variant << "," << cell.setting << ","
            << report.config_hash << "," << cell.n_seeds << "," << detail::fmt4(cell.f1_mean)
            << "," << detail::fmt4(cell.f1_std) << "," << detail::fmt4(cell.acc_mean) << ","
            << detail::fmt4(cell.acc_std) << "\n";
      }
}

inline void emit_report_markdown(const std::string& path,
                                 const std::vector<SweepReport>& sweeps) {
  std::ofstream out(path);
  out << "# Results\n\n";
  out << report_header_lines(">");
  out << "\n";
  for (const auto& sweep : sweeps) {
    out << "## Sweep: " << sweep.sweep << "\n\n";
    out << "| variant | setting | F1 | F1 std | Acc | Acc std | seeds | config |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& report : sweep.reports)
      for (const auto& cell : report.cells) {
        out << "| " << report.variant << " | " << cell.setting << " | "
            << detail::fmt4(cell.f1_mean) << " | " << detail::fmt4(cell.f1_std) << " | "
            << detail::fmt4(cell.acc_mean) << " | " << detail::fmt4(cell.acc_std) << " | "
            << cell.n_seeds << " | " << report.config_hash << " |\n";
      }
    out << "\n";
  }
}

// Template sweeps additionally get the prompt-per-row CSV shape.
inline void emit_template_sweep_csv(const std::string& path, const SweepReport& sweep) {
  std::ofstream out(path);
  out << "prompt,setting,F1,Acc\n";
  for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
    const auto& report = sweep.reports[i];
    const std::string& surface = discrete_preset_surfaces()[i];
    for (const auto& cell : report.cells) {
      out << "\"" << surface << "\"," << cell.setting << "," << detail::fmt4(cell.f1_mean)
          << "," << detail::fmt4(cell.acc_mean) << "\n";
    }
  }
}

inline void emit_report(const std::vector<SweepReport>& sweeps, const std::string& format,
                        const std::string& out_dir) {
  if (sweeps.empty()) throw std::invalid_argument("emit_report: no reports");
  std::filesystem::create_directories(out_dir);
  if (format == "csv" || format == "both") emit_report_csv(out_dir + "/report.csv", sweeps);
  if (format == "markdown" || format == "both")
    emit_report_markdown(out_dir + "/report.md", sweeps);
  if (format != "csv" && format != "markdown" && format != "both") {
    throw ConfigError("emit_report: unknown format '" + format + "'");
  }
  for (const auto& sweep : sweeps) {
    if (sweep.sweep == "template") {
      emit_template_sweep_csv(out_dir + "/template_sweep.csv", sweep);
    }
  }
}

// ---------------------------------------------------------------------------
// Feature dumps and similarity reporting

inline void dump_embeddings(SampleModel& model, const PreparedDataset& data,
                            const VariantData& variant, const std::vector<int>& indices,
                            const std::vector<std::string>& ids, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("dump_embeddings: cannot open " + path + " for writing");
  SeededRng unused(0);
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t stop = std::min(indices.size(), start + chunk);
    std::vector<int> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                          indices.begin() + static_cast<std::ptrdiff_t>(stop));
    Tensor x_fused;
    model.forward(part, data, variant, nullptr, unused, false, &x_fused);
    for (int r = 0; r < x_fused.rows(); ++r) {
      const int idx = part[static_cast<std::size_t>(r)];
      out << ids[static_cast<std::size_t>(idx)] << ","
          << label_name(data.items[static_cast<std::size_t>(idx)].label);
      for (int c = 0; c < x_fused.cols(); ++c)
        out << "," << detail::fmt6(x_fused.at(r, c));
      out << "\n";
    }
  }
}

struct SimilarityReport {
  struct ClassRow {
    std::string cls;
    double matched_mean = 0.0;
    int count = 0;
  };
  std::vector<ClassRow> classes;
  double shuffled_baseline = 0.0;
  int shuffled_count = 0;
  std::uint64_t seed = 0;
};

// Mean cosine similarity of each class's (text, selected image) pairs in the
// shared space, against a seeded random re-pairing baseline.
inline SimilarityReport similarity_report(const PreparedDataset& data, std::uint64_t seed) {
  SimilarityReport report;
  report.seed = seed;
  for (int label = 0; label < kNumClasses; ++label) {
    SimilarityReport::ClassRow row;
    row.cls = label_name(label);
    double total = 0.0;
    for (const auto& item : data.items) {
      if (item.label != label) continue;
      total += cosine_of(item.clip_text, item.clip_image);
      ++row.count;
    }
    if (row.count == 0) throw DataError("similarity_report: class " + row.cls + " is empty");
    row.matched_mean = total / row.count;
    report.classes.push_back(row);
  }
  SeededRng rng(seed);
  std::vector<int> perm = rng.permutation(static_cast<int>(data.items.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    total += cosine_of(data.items[i].clip_text,
                       data.items[static_cast<std::size_t>(perm[i])].clip_image);
  }
  report.shuffled_baseline = total / static_cast<double>(data.items.size());
  report.shuffled_count = static_cast<int>(data.items.size());
  return report;
}

inline void write_similarity_csv(const SimilarityReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("similarity_report: cannot open " + path + " for writing");
  out << "# shuffled baseline over seeded random re-pairing, seed=" << report.seed << "\n";
  out << "class,matched_mean,count\n";
  for (const auto& row : report.classes)
    out << row.cls << "," << detail::fmt6(row.matched_mean) << "," << row.count << "\n";
  out << "shuffled," << detail::fmt6(report.shuffled_baseline) << "," << report.shuffled_count
      << "\n";
}

}  // namespace sample
