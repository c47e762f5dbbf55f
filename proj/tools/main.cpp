// extsum: extractive summarization of long sectioned documents.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "extsum/commands.hpp"
#include "extsum/parallel.hpp"

namespace {

struct RunFlags {
  std::string config;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Registers a string flag that, when given, overrides the config key.
void override_flag(CLI::App* app, RunFlags& flags, const std::string& name, const std::string& key,
                   const std::string& help) {
  app->add_option_function<std::string>(
      name, [&flags, key](const std::string& v) { flags.overrides.emplace_back(key, v); }, help);
}

void add_run_flags(CLI::App* app, RunFlags& flags) {
  app->add_option("--config", flags.config, "JSON run configuration");
  override_flag(app, flags, "--train", "train", "training corpus (JSONL, labeled)");
  override_flag(app, flags, "--val", "val", "validation corpus (JSONL, labeled)");
  override_flag(app, flags, "--test", "test", "test corpus (JSONL)");
  override_flag(app, flags, "--embeddings", "embeddings", "word vectors, `token v1 ... vd` per line");
  override_flag(app, flags, "--checkpoint,--checkpoint-dir", "checkpoint_dir", "checkpoint directory");
  override_flag(app, flags, "--report-dir", "report_dir", "evaluation output directory");
  override_flag(app, flags, "--seed", "seed", "random seed");
  override_flag(app, flags, "--lr", "lr", "Adam learning rate");
  override_flag(app, flags, "--batch-size", "batch_size", "documents per minibatch");
  override_flag(app, flags, "--epochs", "max_epochs", "training epochs");
  override_flag(app, flags, "--limit", "length_limit", "summary length budget in words");
  override_flag(app, flags, "--threads", "threads", "worker threads");
  override_flag(app, flags, "--d-emb", "d_emb", "embedding dimension");
  override_flag(app, flags, "--d-hid", "d_hid", "GRU hidden size");
  override_flag(app, flags, "--d-mlp", "d_mlp", "MLP hidden size");
  override_flag(app, flags, "--d-attn", "d_attn", "attention width (0 = 2*d_hid)");
  override_flag(app, flags, "--dropout", "dropout", "dropout rate");
  override_flag(app, flags, "--decoder", "decoder", "concat or attentive");
  override_flag(app, flags, "--ablation", "ablation", "bsl, bsl+l, bsl+g or bsl+l+g");
  override_flag(app, flags, "--vocab-cap", "vocab_cap", "vocabulary size including UNK");
  override_flag(app, flags, "--max-sentences", "max_sentences", "per-document sentence cap");
  override_flag(app, flags, "--trials", "n_trials", "randomization trials for significance tests");
  override_flag(app, flags, "--buckets", "buckets", "comma-separated word-count bucket edges");
}

extsum::RunConfig resolve(const RunFlags& flags) {
  extsum::RunConfig cfg = flags.config.empty() ? extsum::RunConfig{} : extsum::load_run_config(flags.config);
  for (const auto& [key, value] : flags.overrides) extsum::set_run_config_value(cfg, key, value);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extractive summarization of long documents with local and global context"};
  app.require_subcommand(1);

  extsum::LabelOptions label;
  label.threads = extsum::default_threads();
  auto* label_cmd = app.add_subcommand("label", "Add greedy ROUGE-1 oracle labels to a corpus");
  label_cmd->add_option("input", label.input, "input corpus (JSONL)")->required();
  label_cmd->add_option("output", label.output, "output corpus (JSONL)")->required();
  label_cmd->add_option("--limit", label.length_limit, "oracle length limit in words")->capture_default_str();
  label_cmd->add_option("--max-sentences", label.max_sentences, "per-document sentence cap")->capture_default_str();
  label_cmd->add_option("--threads", label.threads, "worker threads");

  RunFlags train_flags, eval_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write the best checkpoint");
  add_run_flags(train_cmd, train_flags);
  auto* eval_cmd = app.add_subcommand("evaluate", "Score model, Lead and Oracle on a test split");
  add_run_flags(eval_cmd, eval_flags);

  extsum::SummarizeOptions summarize;
  auto* sum_cmd = app.add_subcommand("summarize", "Print the extracted summary of documents");
  sum_cmd->add_option("checkpoint", summarize.checkpoint, "checkpoint directory")->required();
  sum_cmd->add_option("input", summarize.input, "document JSON or corpus JSONL")->required();
  sum_cmd->add_option("--limit", summarize.length_limit, "length budget in words")->capture_default_str();
  sum_cmd->add_option("--max-sentences", summarize.max_sentences, "per-document sentence cap")->capture_default_str();
  sum_cmd->add_flag("--verbose,-v", summarize.verbose, "prefix lines with sentence index and probability");

  std::string hyp_path, ref_path;
  auto* rouge_cmd = app.add_subcommand("rouge", "ROUGE-1/2/L between two files, one sentence per line");
  rouge_cmd->add_option("hypothesis", hyp_path)->required();
  rouge_cmd->add_option("reference", ref_path)->required();

  extsum::CompareOptions compare;
  std::vector<std::string> report_paths;
  auto* cmp_cmd = app.add_subcommand("compare", "Pairwise significance tests between evaluated systems");
  cmp_cmd->add_option("reports", report_paths, "report.json files")->required();
  cmp_cmd->add_option("--trials", compare.n_trials, "randomization trials")->capture_default_str();
  cmp_cmd->add_option("--alpha", compare.alpha, "significance level")->capture_default_str();
  cmp_cmd->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { compare.seed = s; }, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*label_cmd) return extsum::cmd_label(label, std::cerr);
    if (*train_cmd) return extsum::cmd_train(resolve(train_flags), std::cerr);
    if (*eval_cmd) return extsum::cmd_evaluate(resolve(eval_flags), std::cerr);
    if (*sum_cmd) return extsum::cmd_summarize(summarize, std::cout, std::cerr);
    if (*rouge_cmd) return extsum::cmd_rouge(hyp_path, ref_path, std::cout);
    if (*cmp_cmd) {
      compare.reports.assign(report_paths.begin(), report_paths.end());
      return extsum::cmd_compare(compare, std::cout, std::cerr);
    }
  } catch (const extsum::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
