// Command-line front end: data generation, pretraining, training, the
// few-shot / data-rich protocols, ablation sweeps, reports, and diagnostics.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sample/config.hpp"
#include "sample/data.hpp"
#include "sample/harness.hpp"
#include "sample/model.hpp"
#include "sample/pipeline_check.hpp"

namespace {

using namespace sample;

ExperimentConfig resolve_config(const std::string& path) {
  if (path.empty()) {
    ExperimentConfig cfg;
    cfg.normalize_and_validate();
    return cfg;
  }
  return load_config(path);
}

Dataset open_dataset(const std::string& dir) {
  return load_dataset(DatasetManifest::for_dir(dir));
}

struct LoadedStack {
  Dataset dataset;
  PretrainedEncoders encoders;
  PreparedDataset prepared;
  std::vector<std::string> ids;
};

LoadedStack open_stack(const std::string& data_dir, const std::string& encoders_dir,
                       const ExperimentConfig& cfg) {
  LoadedStack stack;
  stack.dataset = open_dataset(data_dir);
  stack.encoders = load_encoders(encoders_dir, cfg, stack.dataset.vocab.size());
  stack.prepared = prepare_dataset(stack.dataset, stack.encoders.dual, &stack.ids);
  return stack;
}

int run_gen_data(const SyntheticGenConfig& gen, const std::string& out_dir) {
  generate_synthetic(gen, out_dir);
  std::cout << "wrote " << gen.n_real + gen.n_fake << " instances to " << out_dir << "\n";
  return 0;
}

int run_pretrain(const std::string& data_dir, const std::string& out_dir,
                 const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset dataset = open_dataset(data_dir);
  PretrainedEncoders enc = pretrain_all(cfg, dataset, seed);
  save_encoders(out_dir, enc, dataset.vocab.size());
  std::printf("mlm heldout accuracy  %.4f (majority baseline %.4f)\n",
              enc.mlm_heldout_accuracy, enc.mlm_majority_baseline);
  std::printf("contrastive heldout   matched %.4f mismatched %.4f gap %.4f (n=%d)\n",
              enc.contrastive_heldout.matched_mean, enc.contrastive_heldout.mismatched_mean,
              enc.contrastive_heldout.gap(), enc.contrastive_heldout.heldout_count);
  std::cout << "encoders saved to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& data_dir, const std::string& encoders_dir,
              const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  LoadedStack stack = open_stack(data_dir, encoders_dir, cfg);
  SplitPlan plan = split_data_rich(stack.dataset, seed);
  SeededRng scratch(0);
  SampleModel proto = SampleModel::create(cfg, stack.dataset.vocab, &stack.encoders.mlm_encoder,
                                          scratch);
  const VariantData variant = proto.prepare_variant(stack.prepared);
  SampleModel model;
  TrialResult trial = train_trial(cfg, plan, stack.prepared, stack.dataset.vocab,
                                  stack.encoders.mlm_encoder, variant, seed, "full", &model);
  std::filesystem::create_directories(out_dir);
  NamedParams named = model.all_named();
  save_checkpoint(out_dir + "/model.smpl", named);
  std::ofstream trial_out(out_dir + "/trial.json");
  trial_out << trial_to_json(trial).dump(2) << "\n";
  std::printf("test macro-F1 %.4f accuracy %.4f (selected epoch %d, %lld trainable params)\n",
              trial.macro_f1, trial.accuracy, trial.selected_epoch, trial.trainable_params);
  std::cout << "model saved to " << out_dir << "/model.smpl\n";
  return 0;
}

int run_protocol_cmd(const std::string& data_dir, const std::string& encoders_dir,
                     ExperimentConfig cfg, ProtocolKind kind, const std::string& out_dir,
                     const std::string& format) {
  cfg.protocol.kind = kind;
  cfg.normalize_and_validate();
  LoadedStack stack = open_stack(data_dir, encoders_dir, cfg);
  AggregateReport report = run_protocol(cfg, stack.dataset, stack.prepared,
                                        stack.encoders.mlm_encoder);
  SweepReport sweep;
  sweep.sweep = kind == ProtocolKind::kFewShot ? "fewshot" : "datarich";
  sweep.reports = {report};
  write_trials(out_dir + "/trials", {sweep});
  emit_report({sweep}, format, out_dir);
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int run_ablate(const std::string& data_dir, const std::string& encoders_dir,
               const ExperimentConfig& cfg, std::vector<std::string> sweeps,
               const std::string& out_dir, const std::string& format) {
  if (sweeps.size() == 1 && sweeps.front() == "all") {
    sweeps = {"components", "alpha", "strategy", "template", "init"};
  }
  LoadedStack stack = open_stack(data_dir, encoders_dir, cfg);
  std::vector<SweepReport> reports =
      run_ablations(cfg, stack.dataset, stack.prepared, stack.encoders.mlm_encoder, sweeps);
  write_trials(out_dir + "/trials", reports);
  emit_report(reports, format, out_dir);
  std::cout << "ablation reports written to " << out_dir << "\n";
  return 0;
}

int run_report(const std::string& trials_dir, const std::string& out_dir,
               const std::string& format) {
  std::vector<TrialResult> trials = read_trials(trials_dir);
  if (trials.empty()) throw DataError("report: no trial files under " + trials_dir);
  emit_report(reports_from_trials(trials), format, out_dir);
  std::cout << "report rebuilt from " << trials.size() << " trials into " << out_dir << "\n";
  return 0;
}

int run_dump_embeddings(const std::string& data_dir, const std::string& encoders_dir,
                        const ExperimentConfig& cfg, const std::string& model_path,
                        const std::string& out_file) {
  LoadedStack stack = open_stack(data_dir, encoders_dir, cfg);
  SeededRng scratch(0);
  SampleModel model = SampleModel::create(cfg, stack.dataset.vocab, &stack.encoders.mlm_encoder,
                                          scratch);
  NamedParams named = model.all_named();
  load_checkpoint_into(model_path, named);
  const VariantData variant = model.prepare_variant(stack.prepared);
  std::vector<int> all(stack.prepared.items.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  dump_embeddings(model, stack.prepared, variant, all, stack.ids, out_file);
  std::cout << "wrote " << all.size() << " feature rows to " << out_file << "\n";
  return 0;
}

int run_sim_report(const std::string& data_dir, const std::string& encoders_dir,
                   const ExperimentConfig& cfg, std::uint64_t seed,
                   const std::string& out_file) {
  LoadedStack stack = open_stack(data_dir, encoders_dir, cfg);
  SimilarityReport report = similarity_report(stack.prepared, seed);
  write_similarity_csv(report, out_file);
  for (const auto& row : report.classes)
    std::printf("%-5s matched mean %.4f (n=%d)\n", row.cls.c_str(), row.matched_mean,
                row.count);
  std::printf("shuffled baseline %.4f (n=%d, seed=%llu)\n", report.shuffled_baseline,
              report.shuffled_count, static_cast<unsigned long long>(report.seed));
  return 0;
}

int run_gradcheck(double tolerance) {
  bool ok = true;
  for (const auto& result : check_all_template_kinds(tolerance)) {
    ok = ok && result.report.passed;
    std::printf("gradcheck %-10s max_rel_err %.3e over %lld params in %.2fs [%s]\n",
                to_string(result.kind), result.report.max_rel_err, result.parameters,
                result.seconds, result.report.passed ? "OK" : "FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"similarity-gated multimodal prompt learning workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "out", data_dir, encoders_dir;
  std::uint64_t seed = 1;
  std::string format = "both";
  app.add_option("--config", config_path, "experiment configuration (json)");
  app.add_option("--seed", seed, "run seed");
  app.add_option("--out", out_dir, "output directory or file");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic multimodal corpus");
  SyntheticGenConfig gen_cfg;
  gen->add_option("--n-real", gen_cfg.n_real, "real instances");
  gen->add_option("--n-fake", gen_cfg.n_fake, "fake instances");
  gen->add_option("--topics", gen_cfg.topics, "topic count");
  gen->add_option("--image-side", gen_cfg.image_side, "square image side length");
  gen->add_option("--marker-fraction", gen_cfg.marker_fraction,
                  "fraction of fakes carrying the textual marker");
  gen->add_option("--mismatch-fraction", gen_cfg.mismatch_fraction,
                  "fraction of fakes with a cross-modal mismatch");
  gen->add_option("--noise", gen_cfg.noise_level, "image noise level");

  auto* pre = app.add_subcommand("pretrain", "run masked-LM and contrastive pretraining");
  pre->add_option("--data", data_dir, "dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train one model on a data-rich split");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--encoders", encoders_dir, "pretrained encoders directory")->required();

  auto* fewshot = app.add_subcommand("fewshot", "run the few-shot protocol");
  fewshot->add_option("--data", data_dir, "dataset directory")->required();
  fewshot->add_option("--encoders", encoders_dir, "pretrained encoders directory")->required();
  fewshot->add_option("--format", format, "report format: csv, markdown, both");

  auto* datarich = app.add_subcommand("datarich", "run the data-rich protocol");
  datarich->add_option("--data", data_dir, "dataset directory")->required();
  datarich->add_option("--encoders", encoders_dir, "pretrained encoders directory")->required();
  datarich->add_option("--format", format, "report format: csv, markdown, both");

  auto* ablate = app.add_subcommand("ablate", "run ablation sweeps");
  std::vector<std::string> sweeps = {"all"};
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--encoders", encoders_dir, "pretrained encoders directory")->required();
  ablate->add_option("--sweep", sweeps,
                     "sweeps: components, alpha, strategy, template, init, all");
  ablate->add_option("--format", format, "report format: csv, markdown, both");

  auto* report = app.add_subcommand("report", "rebuild reports from persisted trials");
  std::string trials_dir;
  report->add_option("--trials", trials_dir, "directory of trial json files")->required();
  report->add_option("--format", format, "report format: csv, markdown, both");

  auto* dump = app.add_subcommand("dump-embeddings", "write pre-classifier features to csv");
  std::string model_path;
  dump->add_option("--data", data_dir, "dataset directory")->required();
  dump->add_option("--encoders", encoders_dir, "pretrained encoders directory")->required();
  dump->add_option("--model", model_path, "trained model checkpoint")->required();

  auto* sim = app.add_subcommand("sim-report", "matched vs shuffled similarity report");
  sim->add_option("--data", data_dir, "dataset directory")->required();
  sim->add_option("--encoders", encoders_dir, "pretrained encoders directory")->required();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  double tolerance = 1e-3;
  gradcheck_cmd->add_option("--tolerance", tolerance, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      if (app.count("--seed") > 0) gen_cfg.seed = seed;  // generator default stays 13
      gen_cfg.validate();
      return run_gen_data(gen_cfg, out_dir);
    }
    const ExperimentConfig cfg = resolve_config(config_path);
    if (pre->parsed()) return run_pretrain(data_dir, out_dir, cfg, seed);
    if (train_cmd->parsed()) return run_train(data_dir, encoders_dir, cfg, seed, out_dir);
    if (fewshot->parsed())
      return run_protocol_cmd(data_dir, encoders_dir, cfg, ProtocolKind::kFewShot, out_dir,
                              format);
    if (datarich->parsed())
      return run_protocol_cmd(data_dir, encoders_dir, cfg, ProtocolKind::kDataRich, out_dir,
                              format);
    if (ablate->parsed())
      return run_ablate(data_dir, encoders_dir, cfg, sweeps, out_dir, format);
    if (report->parsed()) return run_report(trials_dir, out_dir, format);
    if (dump->parsed())
      return run_dump_embeddings(data_dir, encoders_dir, cfg, model_path, out_dir);
    if (sim->parsed()) return run_sim_report(data_dir, encoders_dir, cfg, seed, out_dir);
    if (gradcheck_cmd->parsed()) return run_gradcheck(tolerance);
  } catch (const sample::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const sample::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
