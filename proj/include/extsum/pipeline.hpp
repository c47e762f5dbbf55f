#pragma once

// Training, budgeted extraction and the evaluation harness.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extsum/corpus.hpp"
#include "extsum/metrics.hpp"
#include "extsum/model.hpp"
#include "extsum/oracle.hpp"

namespace extsum {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  std::size_t length_limit = 200;  // extraction budget for validation
  std::size_t threads = 1;         // validation scoring workers

  void validate() const;
};

// #negative / #positive over all sentences of the training corpus.
double positive_weight(std::span<const LabeledDocument> corpus);

// -sum_i [w_pos * y_i * log p_i + (1 - y_i) * log(1 - p_i)] for one document.
double weighted_loss(std::span<const double> p, std::span<const int> y, double w_pos);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_rouge2_f = 0.0;
  double wall_time = 0.0;  // seconds since training started
};

// 0-based index of the first epoch with the highest validation ROUGE-2.
std::size_t select_best_epoch(std::span<const EpochLog> log);

struct TrainResult {
  ModelParams best_params;
  ModelParams final_params;  // after the last epoch
  std::size_t best_epoch = 0;  // 1-based
  std::vector<EpochLog> log;
  double w_pos = 0.0;
};

struct TrainHooks {
  std::optional<ModelParams> initial_params;  // otherwise initialized from the seed
  std::function<void(const EpochLog&)> on_epoch;
};

TrainResult train(std::span<const LabeledDocument> train_docs, std::span<const LabeledDocument> val_docs,
                  const Vocabulary& vocab, const EmbeddingTable& embeddings, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, TrainHooks hooks = {});

// Mean per-document weighted loss in inference mode (no dropout).
double corpus_loss(std::span<const LabeledDocument> docs, const Vocabulary& vocab, const EmbeddingTable& embeddings,
                   const ModelParams& params, const ModelConfig& cfg, double w_pos);

// Takes sentences by descending probability (ties: lower index) until the
// running word count meets or exceeds the limit; the crossing sentence is
// kept. Returns indices in document order.
std::vector<std::size_t> extract_summary(const Document& doc, std::span<const double> p, std::size_t length_limit);

std::vector<std::string> summary_tokens(const Document& doc, std::span<const std::size_t> indices);

struct SystemScores {
  std::vector<RougeTriple> per_document;
  RougeTriple mean;  // mean of per-document precision, recall and F1
};

SystemScores score_system(std::span<const Document> docs, std::span<const std::vector<std::string>> hypotheses);

struct BucketRow {
  std::size_t lower = 0;                // inclusive word count
  std::optional<std::size_t> upper;     // exclusive; nullopt = unbounded
  std::size_t count = 0;
  std::map<std::string, double> mean_rouge1_f;
  std::map<std::string, double> mean_rouge2_f;
};

struct PairComparison {
  std::string first, second;
  SigTestResult test;
  double corrected_p = 1.0;
  bool significant = false;  // corrected_p < alpha
};

struct ComparisonTable {
  std::vector<std::string> systems;
  std::vector<PairComparison> pairs;
  std::string best;               // highest mean score
  std::vector<std::string> ties;  // best plus systems not significantly different from it
  double alpha = 0.01;
};

struct EvalReport {
  std::size_t length_limit = 200;
  std::vector<std::string> doc_ids;
  std::vector<std::size_t> doc_words;
  std::map<std::string, SystemScores> systems;
  std::vector<BucketRow> buckets;
  ComparisonTable comparison;
};

// Assigns each document to the bucket containing its total word count.
// Edges must be strictly increasing; no edges gives one bucket.
std::vector<BucketRow> bucket_by_length(const EvalReport& report, std::span<const std::size_t> edges);

using SystemSeries = std::map<std::string, std::vector<double>>;

// Pairwise approximate randomization with a Bonferroni factor equal to the
// number of pairs. All series must have equal length.
ComparisonTable compare_systems(const SystemSeries& scores, std::size_t n_trials, std::uint64_t seed,
                                double alpha = 0.01);

struct EvalOptions {
  std::size_t length_limit = 200;
  std::vector<std::size_t> bucket_edges;
  std::size_t n_trials = 10000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Scores the model, Lead and Oracle rows on `docs`. Oracle labels are taken
// from the documents when present and generated otherwise.
EvalReport evaluate(std::span<const Document> docs, const ExtractiveModel& model, const EvalOptions& options);

// Mean extracted-summary ROUGE-2 F1 for a set of parameters (inference mode).
double validation_rouge2(std::span<const LabeledDocument> docs, const Vocabulary& vocab,
                         const EmbeddingTable& embeddings, const ModelParams& params, const ModelConfig& cfg,
                         std::size_t length_limit, std::size_t threads);

std::string report_to_json(const EvalReport& report);
std::string buckets_to_tsv(const EvalReport& report);

// Per-document ROUGE-2 F1 series keyed by system, read back from the JSON
// written by report_to_json.
struct ReportSeries {
  std::vector<std::string> doc_ids;
  SystemSeries rouge2_f;
};
ReportSeries read_report_series(std::string_view json_text);

}  // namespace extsum
