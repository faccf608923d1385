/*
 * Copyright 2026 The lcp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// lcp command-line front end.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "lcp/common.hpp"
#include "lcp/corpus.hpp"
#include "lcp/encoding.hpp"
#include "lcp/ensemble.hpp"
#include "lcp/evaluation.hpp"
#include "lcp/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct RunFlags {
  std::string config;
  std::optional<std::string> method, subtask, encoder, out;
  std::optional<std::string> train, dev, stage1_train, stage1_dev, aux_train, aux_dev, frequency_table;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, alpha;
  std::optional<int> batch_size, epochs, min_count;
  std::optional<std::size_t> max_len;
  bool per_domain = false;
  std::vector<double> grid_lrs;
  std::vector<int> grid_batches;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("-c,--config", f.config, "Run config JSON");
  cmd->add_option("--method", f.method, "standard | feat | adv | msft | mtl, combined with '+'");
  cmd->add_option("--subtask", f.subtask, "single_word | mwe");
  cmd->add_option("--encoder", f.encoder, "Encoder preset");
  cmd->add_option("-o,--out", f.out, "Output directory");
  cmd->add_option("--train", f.train, "Training TSV");
  cmd->add_option("--dev", f.dev, "Development TSV");
  cmd->add_option("--stage1-train", f.stage1_train, "First-stage training TSV (msft)");
  cmd->add_option("--stage1-dev", f.stage1_dev, "First-stage development TSV (msft)");
  cmd->add_option("--aux-train", f.aux_train, "Auxiliary-task training TSV (mtl)");
  cmd->add_option("--aux-dev", f.aux_dev, "Auxiliary-task development TSV (mtl)");
  cmd->add_option("--frequency-table", f.frequency_table, "token<TAB>count file (feat)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--lr", f.lr, "Peak learning rate");
  cmd->add_option("--alpha", f.alpha, "Adversarial regularizer weight");
  cmd->add_option("--batch-size", f.batch_size, "Batch size");
  cmd->add_option("--epochs", f.epochs, "Maximum epochs");
  cmd->add_option("--min-count", f.min_count, "Vocabulary minimum count");
  cmd->add_option("--max-len", f.max_len, "Maximum sequence length");
  cmd->add_flag("--per-domain", f.per_domain, "Select checkpoints per domain");
}

lcp::RunConfig merge(const RunFlags& f) {
  lcp::RunConfig c = f.config.empty() ? lcp::RunConfig{} : lcp::RunConfig::load(f.config);
  if (f.method) c.method = lcp::MethodSet::parse(*f.method);
  if (f.subtask) c.subtask = lcp::parse_subtask(*f.subtask);
  if (f.encoder) c.encoder_preset = *f.encoder;
  if (f.out) c.output_dir = *f.out;
  if (f.train) c.data.train = *f.train;
  if (f.dev) c.data.dev = *f.dev;
  if (f.stage1_train) c.data.stage1_train = *f.stage1_train;
  if (f.stage1_dev) c.data.stage1_dev = *f.stage1_dev;
  if (f.aux_train) c.data.aux_train = *f.aux_train;
  if (f.aux_dev) c.data.aux_dev = *f.aux_dev;
  if (f.frequency_table) c.data.frequency_table = *f.frequency_table;
  if (f.seed) c.optimizer.seed = *f.seed;
  if (f.lr) c.optimizer.learning_rate = *f.lr;
  if (f.alpha) c.adv.alpha = *f.alpha;
  if (f.batch_size) c.optimizer.batch_size = *f.batch_size;
  if (f.epochs) c.optimizer.max_epochs = *f.epochs;
  if (f.min_count) c.min_count = *f.min_count;
  if (f.max_len) c.max_len = *f.max_len;
  if (f.per_domain) c.per_domain_selection = true;
  if (!f.grid_lrs.empty()) c.grid_learning_rates = f.grid_lrs;
  if (!f.grid_batches.empty()) c.grid_batch_sizes = f.grid_batches;
  return c;
}

void report_run(const lcp::RunResult& r) {
  std::cout << fmt::format("bundle: {}\n", r.bundle.string());
  std::cout << fmt::format("selected epoch: {}{}\n", r.selection.overall + 1,
                           r.selection.by_domain ? " (per-domain routing enabled)" : "");
}

lcp::Subtask subtask_or(const std::optional<std::string>& s, lcp::Subtask fallback) {
  return s ? lcp::parse_subtask(*s) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lexical complexity prediction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lcp::kVersion));

  // make-synthetic
  auto* synth = app.add_subcommand("make-synthetic", "Generate a frequency-driven synthetic corpus");
  std::uint64_t synth_seed = 1;
  std::size_t synth_size = 600;
  std::string synth_subtask = "single_word";
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--size", synth_size, "Training rows (trial/test get size/10)")->capture_default_str();
  synth->add_option("--subtask", synth_subtask, "single_word | mwe")->capture_default_str();
  synth->add_option("-o,--out", synth_out, "Output directory")->required();

  // build-vocab
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a vocabulary from training files");
  std::vector<std::string> vocab_inputs;
  std::string vocab_subtask = "single_word";
  int vocab_min_count = 1;
  std::string vocab_out;
  vocab_cmd->add_option("--train", vocab_inputs, "Training TSV(s)")->required();
  vocab_cmd->add_option("--subtask", vocab_subtask, "single_word | mwe")->capture_default_str();
  vocab_cmd->add_option("--min-count", vocab_min_count, "Minimum token count")->capture_default_str();
  vocab_cmd->add_option("-o,--out", vocab_out, "Output vocabulary TSV")->required();

  // train / grid-search
  RunFlags train_flags, grid_flags;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  add_run_flags(train_cmd, train_flags);
  auto* grid_cmd = app.add_subcommand("grid-search", "Train every learning-rate x batch-size combination");
  add_run_flags(grid_cmd, grid_flags);
  grid_cmd->add_option("--lrs", grid_flags.grid_lrs, "Learning rates");
  grid_cmd->add_option("--batch-sizes", grid_flags.grid_batches, "Batch sizes");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Score a dataset with a bundle or checkpoint");
  std::string predict_model, predict_data, predict_out;
  std::optional<std::string> predict_subtask;
  predict_cmd->add_option("-m,--model", predict_model, "Bundle, run directory or checkpoint")->required();
  predict_cmd->add_option("-d,--data", predict_data, "Dataset TSV")->required();
  predict_cmd->add_option("--subtask", predict_subtask, "Dataset subtask (defaults to the bundle's)");
  predict_cmd->add_option("-o,--out", predict_out, "Prediction CSV")->required();

  // ensemble
  auto* ens_cmd = app.add_subcommand("ensemble", "Average member predictions");
  std::string ens_spec, ens_data, ens_out, ens_subtask = "single_word";
  std::vector<std::string> ens_predictions, ens_models;
  ens_cmd->add_option("--spec", ens_spec, "Ensemble spec JSON");
  ens_cmd->add_option("--predictions", ens_predictions, "Member prediction CSVs");
  ens_cmd->add_option("--models", ens_models, "Member bundles or checkpoints");
  ens_cmd->add_option("-d,--data", ens_data, "Dataset TSV")->required();
  ens_cmd->add_option("--subtask", ens_subtask, "single_word | mwe")->capture_default_str();
  ens_cmd->add_option("-o,--out", ens_out, "Prediction CSV")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against gold labels");
  std::string eval_pred, eval_gold, eval_subtask = "single_word", eval_json;
  eval_cmd->add_option("-p,--predictions", eval_pred, "Prediction CSV")->required();
  eval_cmd->add_option("-g,--gold", eval_gold, "Labeled dataset TSV")->required();
  eval_cmd->add_option("--subtask", eval_subtask, "single_word | mwe")->capture_default_str();
  eval_cmd->add_option("--json", eval_json, "Also write the JSON report here");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Export scatter, histogram and per-domain tables");
  std::string an_pred, an_gold, an_subtask = "single_word", an_out;
  double an_bin = 0.05;
  analyze_cmd->add_option("-p,--predictions", an_pred, "Prediction CSV")->required();
  analyze_cmd->add_option("-g,--gold", an_gold, "Labeled dataset TSV")->required();
  analyze_cmd->add_option("--subtask", an_subtask, "single_word | mwe")->capture_default_str();
  analyze_cmd->add_option("--bin-width", an_bin, "Histogram bin width")->capture_default_str();
  analyze_cmd->add_option("-o,--out", an_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      const auto corpus = lcp::make_synthetic(synth_seed, synth_size, lcp::parse_subtask(synth_subtask));
      lcp::write_synthetic(corpus, synth_out);
      std::cout << fmt::format("wrote {} / {} / {} rows to {}\n", corpus.train.size(), corpus.trial.size(),
                               corpus.test.size(), synth_out);
    } else if (*vocab_cmd) {
      std::vector<lcp::Dataset> sets;
      for (const auto& p : vocab_inputs) sets.push_back(lcp::load_dataset(p, lcp::parse_subtask(vocab_subtask)));
      std::vector<const lcp::Dataset*> ptrs;
      for (const auto& s : sets) ptrs.push_back(&s);
      const auto vocab = lcp::build_vocab(ptrs, vocab_min_count);
      vocab.save(vocab_out);
      std::cout << fmt::format("{} entries -> {}\n", vocab.size(), vocab_out);
    } else if (*train_cmd) {
      report_run(lcp::run_train(merge(train_flags), &std::cout));
    } else if (*grid_cmd) {
      const auto r = lcp::run_grid_search(merge(grid_flags), &std::cout);
      std::cout << fmt::format("best: lr={} batch_size={}\n", r.optimizer.learning_rate, r.optimizer.batch_size);
      report_run(r);
    } else if (*predict_cmd) {
      const auto bundle = lcp::load_bundle(predict_model);
      const auto ds = lcp::load_dataset(predict_data, subtask_or(predict_subtask, bundle.subtask), lcp::Split::test);
      const auto preds = lcp::predict_with_bundle(bundle, ds);
      lcp::write_predictions(preds, predict_out);
      std::cout << fmt::format("{} predictions -> {}\n", preds.size(), predict_out);
    } else if (*ens_cmd) {
      lcp::EnsembleSpec spec;
      if (!ens_spec.empty()) spec = lcp::EnsembleSpec::load(ens_spec);
      for (const auto& p : ens_predictions) {
        spec.members.push_back({p, lcp::EnsembleMember::Kind::predictions, p, std::nullopt});
      }
      for (const auto& p : ens_models) {
        spec.members.push_back({p, lcp::EnsembleMember::Kind::checkpoint, p, std::nullopt});
      }
      const auto ds = lcp::load_dataset(ens_data, lcp::parse_subtask(ens_subtask), lcp::Split::test);
      const auto preds = lcp::predict_ensemble(spec, ds, lcp::predict_member);
      lcp::write_predictions(preds, ens_out);
      std::cout << fmt::format("{} members, {} predictions -> {}\n", spec.members.size(), preds.size(), ens_out);
    } else if (*eval_cmd) {
      const auto gold = lcp::load_dataset(eval_gold, lcp::parse_subtask(eval_subtask), lcp::Split::test);
      const auto report = lcp::evaluate(lcp::read_predictions(eval_pred), gold);
      std::cout << "count\tR\tRho\tMAE\tMSE\tR2\n" << lcp::report_to_tsv_line(report);
      if (!eval_json.empty()) lcp::write_file_atomic(eval_json, lcp::report_to_json(report));
    } else if (*analyze_cmd) {
      const auto gold = lcp::load_dataset(an_gold, lcp::parse_subtask(an_subtask), lcp::Split::test);
      lcp::export_analysis(lcp::read_predictions(an_pred), gold, an_out, {an_bin});
      std::cout << fmt::format("analysis tables -> {}\n", an_out);
    }
  } catch (const lcp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lcp::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lcp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
