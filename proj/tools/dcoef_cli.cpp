// dcoef: dataset generation, training, evaluation and ablation sweeps.
//
// Exit codes: 0 success, 2 input or parse error, 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcoef/errors.hpp"
#include "dcoef/experiment.hpp"
#include "dcoef/model.hpp"
#include "dcoef/noise_harness.hpp"
#include "dcoef/trainer.hpp"

namespace fs = std::filesystem;
using namespace dcoef;

namespace {

// String forms of enum-valued options, resolved after parsing.
struct RunStrings {
  std::string activation = "relu";
  std::string method = "full";
  std::string tiebreak = "original";
  std::string joint_labels = "pseudo";
  std::size_t steps = 0;
  bool no_kl = false, no_mixup = false, no_augment_policy = false, no_lambda = false;
};

struct DataStrings {
  std::string generator = "blobs";
  std::string noise = "uniform";
};

void add_run_options(CLI::App* cmd, RunConfig& cfg, RunStrings& s) {
  cmd->add_option("--hidden", cfg.hidden_dims, "Hidden layer widths")->delimiter(',')->capture_default_str();
  cmd->add_option("--activation", s.activation, "relu or tanh")->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  cmd->add_option("--probe-batch-size", cfg.probe_batch_size)->capture_default_str();
  cmd->add_option("--epochs", cfg.epochs)->capture_default_str();
  cmd->add_option("--steps", s.steps, "Exact step count; overrides --epochs");
  cmd->add_option("--p", cfg.p, "Weight of the training-anchored mixup loss")->capture_default_str();
  cmd->add_option("--k", cfg.k, "Weight of the consistency loss")->capture_default_str();
  cmd->add_option("--T", cfg.T, "omega* threshold for the mislabeled split")->capture_default_str();
  cmd->add_option("--lambda0", cfg.meta.lambda0)->capture_default_str();
  cmd->add_option("--tiebreak", s.tiebreak, "original or pseudo")->capture_default_str();
  cmd->add_option("--eps-norm", cfg.meta.eps_norm)->capture_default_str();
  cmd->add_option("--tau", cfg.tau, "Sharpening temperature")->capture_default_str();
  cmd->add_option("--K", cfg.K, "Predictions averaged per pseudo label")->capture_default_str();
  cmd->add_option("--jitter", cfg.augment.jitter_sigma)->capture_default_str();
  cmd->add_option("--scale-lo", cfg.augment.scale_lo)->capture_default_str();
  cmd->add_option("--scale-hi", cfg.augment.scale_hi)->capture_default_str();
  cmd->add_option("--cutout", cfg.augment.cutout_span)->capture_default_str();
  cmd->add_option("--lr", cfg.schedule.eta0, "Peak learning rate of the first cycle")->capture_default_str();
  cmd->add_option("--cycle0", cfg.schedule.cycle0)->capture_default_str();
  cmd->add_option("--growth", cfg.schedule.growth)->capture_default_str();
  cmd->add_option("--restart-decay", cfg.schedule.restart_decay)->capture_default_str();
  cmd->add_option("--eta-min", cfg.schedule.eta_min)->capture_default_str();
  cmd->add_option("--momentum", cfg.momentum)->capture_default_str();
  cmd->add_option("--method", s.method, "full or vanilla")->capture_default_str();
  cmd->add_option("--joint-labels", s.joint_labels, "pseudo or selected")->capture_default_str();
  cmd->add_flag("--train-on-clean", cfg.train_on_clean_labels, "Train on the hidden clean labels");
  cmd->add_option("--eval-every", cfg.eval_every)->capture_default_str();
  cmd->add_flag("--no-kl", s.no_kl);
  cmd->add_flag("--no-mixup", s.no_mixup);
  cmd->add_flag("--no-augment-policy", s.no_augment_policy, "Drop jitter and scaling, keep cutout");
  cmd->add_flag("--no-lambda", s.no_lambda, "Keep the original labels");
}

void resolve_run(RunConfig& cfg, const RunStrings& s, const CLI::App* cmd) {
  cfg.activation = parse_activation(s.activation);
  cfg.method = parse_method(s.method);
  if (s.tiebreak == "original") cfg.meta.tiebreak = TieBreak::original;
  else if (s.tiebreak == "pseudo") cfg.meta.tiebreak = TieBreak::pseudo;
  else throw std::invalid_argument("--tiebreak must be original or pseudo");
  if (s.joint_labels == "pseudo") cfg.joint_labels = MislabeledLabels::pseudo;
  else if (s.joint_labels == "selected") cfg.joint_labels = MislabeledLabels::selected;
  else throw std::invalid_argument("--joint-labels must be pseudo or selected");
  if (cmd->count("--steps") > 0) cfg.steps = s.steps;
  cfg.ablation = {!s.no_kl, !s.no_mixup, !s.no_augment_policy, !s.no_lambda};
  cfg.validate();
}

void add_data_options(CLI::App* cmd, DataSpec& d, DataStrings& s) {
  cmd->add_option("--generator", s.generator, "blobs, moons or rings")->capture_default_str();
  cmd->add_option("--classes", d.num_classes)->capture_default_str();
  cmd->add_option("--per-class", d.per_class, "Rows per category before the probe split")->capture_default_str();
  cmd->add_option("--dim", d.dim)->capture_default_str();
  cmd->add_option("--radius", d.radius)->capture_default_str();
  cmd->add_option("--sigma", d.sigma)->capture_default_str();
  cmd->add_option("--probe-per-class", d.probe_per_class)->capture_default_str();
  cmd->add_option("--noise", s.noise, "uniform or asymmetric")->capture_default_str();
  cmd->add_option("--test-per-class", d.test_per_class)->capture_default_str();
}

void resolve_data(DataSpec& d, const DataStrings& s) {
  d.generator = parse_generator(s.generator);
  d.noise = parse_noise_kind(s.noise);
  d.validate();
}

fs::path default_out_dir() {
  const char* env = std::getenv("DCOEF_OUT_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path(".");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label training with meta-learned data coefficients"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file; [section] names match subcommands");

  // gen-data
  DataSpec gen_spec;
  DataStrings gen_strings;
  double gen_ratio = 0.0;
  std::uint64_t gen_seed = 1;
  fs::path gen_out, gen_test_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a dataset with a probe split and injected noise");
  add_data_options(gen, gen_spec, gen_strings);
  gen->add_option("--ratio", gen_ratio, "Noise ratio")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--out", gen_out, "Dataset file")->required();
  gen->add_option("--test-out", gen_test_out, "Also write a clean held-out set here");

  // train
  RunConfig train_cfg;
  RunStrings train_strings;
  fs::path train_data, train_eval, train_out_dir, train_metrics, train_ckpt;
  auto* train = app.add_subcommand("train", "Train on a dataset file");
  add_run_options(train, train_cfg, train_strings);
  train->add_option("--seed", train_cfg.seed)->capture_default_str();
  train->add_option("--data", train_data, "Dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--eval-data", train_eval, "Held-out dataset scored during training")->check(CLI::ExistingFile);
  train->add_option("--out-dir", train_out_dir, "Default directory for outputs (env DCOEF_OUT_DIR)");
  train->add_option("--metrics", train_metrics, "Metrics file (default <out-dir>/metrics.csv)");
  train->add_option("--checkpoint", train_ckpt, "Checkpoint file (default <out-dir>/model.ckpt)");

  // eval
  fs::path eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "Print accuracy of a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);

  // sweep
  SweepSpec sweep_spec;
  DataStrings sweep_data_strings;
  RunStrings sweep_strings;
  std::vector<std::string> sweep_variants{"full"};
  fs::path sweep_out_dir;
  auto* sweep = app.add_subcommand("sweep", "Run a grid of noise ratios, variants and seeds");
  add_data_options(sweep, sweep_spec.data, sweep_data_strings);
  add_run_options(sweep, sweep_spec.run, sweep_strings);
  sweep->add_option("--ratios", sweep_spec.ratios)->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", sweep_spec.seeds)->delimiter(',')->capture_default_str();
  sweep->add_option("--variants", sweep_variants,
                    "full, no-kl, no-mixup, no-augment-policy, no-lambda, vanilla, clean")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--out-dir", sweep_out_dir, "Directory for runs.csv and summary.csv (env DCOEF_OUT_DIR)");

  try {
    app.parse(argc, argv);

    if (*gen) {
      resolve_data(gen_spec, gen_strings);
      gen_spec.ratio = gen_ratio;
      gen_spec.seed = gen_seed;
      const NoisyDataset ds = generate_dataset(gen_spec);
      ensure_parent(gen_out);
      write_dataset(ds, gen_out);
      if (!gen_test_out.empty()) {
        ensure_parent(gen_test_out);
        write_dataset(generate_test_set(gen_spec), gen_test_out);
      }
      std::printf("rows=%zu probe_rows=%zu realized_ratio=%.4f\n", ds.features.rows(), ds.probe_features.rows(),
                  ds.noise_spec.realized_ratio);
    } else if (*train) {
      resolve_run(train_cfg, train_strings, train);
      const fs::path out_dir = train_out_dir.empty() ? default_out_dir() : train_out_dir;
      if (train_metrics.empty()) train_metrics = out_dir / "metrics.csv";
      if (train_ckpt.empty()) train_ckpt = out_dir / "model.ckpt";
      const NoisyDataset ds = read_dataset(train_data);
      LabeledSet held_out;
      if (!train_eval.empty()) held_out = as_labeled(read_dataset(train_eval));
      const FitResult result = fit(ds, train_cfg, train_eval.empty() ? nullptr : &held_out);
      ensure_parent(train_metrics);
      write_metrics(result.history, train_cfg, train_metrics);
      ensure_parent(train_ckpt);
      save_checkpoint(result.model, train_ckpt);
      std::printf("steps=%zu config_hash=%s metrics=%s checkpoint=%s\n", result.history.size(),
                  train_cfg.hash().c_str(), train_metrics.string().c_str(), train_ckpt.string().c_str());
    } else if (*eval) {
      const Mlp model = load_checkpoint(eval_ckpt);
      const NoisyDataset ds = read_dataset(eval_data);
      if (ds.feature_dim() != model.input_dim()) {
        throw DimensionError("dataset has " + std::to_string(ds.feature_dim()) + " features, checkpoint expects " +
                             std::to_string(model.input_dim()));
      }
      std::printf("%.4f\n", evaluate(model, ds.features, ds.clean_labels));
    } else if (*sweep) {
      resolve_data(sweep_spec.data, sweep_data_strings);
      resolve_run(sweep_spec.run, sweep_strings, sweep);
      sweep_spec.variants.clear();
      for (const std::string& v : sweep_variants) sweep_spec.variants.push_back(parse_variant(v));
      const fs::path out_dir = sweep_out_dir.empty() ? default_out_dir() : sweep_out_dir;
      const SweepResult result = run_sweep(sweep_spec);
      write_text(out_dir / "runs.csv", runs_table(result.runs));
      const std::string summary = summary_table(result.summary);
      write_text(out_dir / "summary.csv", summary);
      std::fputs(summary.c_str(), stdout);
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
