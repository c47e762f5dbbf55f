#include "extsum/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "extsum/adam.hpp"
#include "extsum/parallel.hpp"
#include "json.hpp"

namespace extsum {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max epochs must be positive");
  if (length_limit == 0) throw std::invalid_argument("length limit must be positive");
}

double positive_weight(std::span<const LabeledDocument> corpus) {
  std::size_t pos = 0, neg = 0;
  for (const auto& d : corpus) {
    for (int y : d.labels) (y ? pos : neg) += 1;
  }
  if (pos == 0) {
    throw std::runtime_error("training corpus has no positive labels; regenerate them with `extsum label`");
  }
  return static_cast<double>(neg) / static_cast<double>(pos);
}

double weighted_loss(std::span<const double> p, std::span<const int> y, double w_pos) {
  if (p.size() != y.size()) throw std::invalid_argument("weighted_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    loss -= y[i] ? w_pos * std::log(p[i]) : std::log(1.0 - p[i]);
  }
  return loss;
}

std::size_t select_best_epoch(std::span<const EpochLog> log) {
  if (log.empty()) throw std::invalid_argument("select_best_epoch: empty log");
  std::size_t best = 0;
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (log[i].val_rouge2_f > log[best].val_rouge2_f) best = i;
  }
  return best;
}

// ---- extraction ------------------------------------------------------------

std::vector<std::size_t> extract_summary(const Document& doc, std::span<const double> p, std::size_t length_limit) {
  if (p.size() != doc.sentences.size()) {
    throw std::invalid_argument("extract_summary: " + std::to_string(p.size()) + " scores for " +
                                std::to_string(doc.sentences.size()) + " sentences");
  }
  if (length_limit == 0) throw std::invalid_argument("extract_summary: length limit must be >= 1");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::vector<std::size_t> chosen;
  std::size_t words = 0;
  for (std::size_t i : order) {
    chosen.push_back(i);
    words += doc.sentences[i].word_count;
    if (words >= length_limit) break;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<std::string> summary_tokens(const Document& doc, std::span<const std::size_t> indices) {
  std::vector<std::string> out;
  for (std::size_t i : indices) {
    const auto& t = doc.sentences.at(i).tokens;
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

// ---- training --------------------------------------------------------------

namespace {

std::vector<std::vector<Tensor>> embed_all(std::span<const LabeledDocument> docs, const Vocabulary& vocab,
                                           const EmbeddingTable& embeddings) {
  std::vector<std::vector<Tensor>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(encode_sentences(d.document, vocab, embeddings));
  return out;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % i);
    std::swap(v[i - 1], v[j]);
  }
}

double mean_validation_rouge2(std::span<const LabeledDocument> docs, const std::vector<std::vector<Tensor>>& embedded,
                              const ModelParams& params, const ModelConfig& cfg, std::size_t length_limit,
                              std::size_t threads) {
  if (docs.empty()) return 0.0;
  std::vector<double> scores(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t k) {
    NoGradGuard no_grad;
    const Document& doc = docs[k].document;
    const auto p = score_sentences(doc, embedded[k], params, cfg).probabilities;
    const auto picked = extract_summary(doc, p, length_limit);
    const auto hyp = summary_tokens(doc, picked);
    const auto ref = doc.abstract_tokens();
    scores[k] = rouge_n(hyp, ref, 2).f1;
  });
  double total = 0.0;
  for (double s : scores) total += s;
  return total / static_cast<double>(scores.size());
}

}  // namespace

double validation_rouge2(std::span<const LabeledDocument> docs, const Vocabulary& vocab,
                         const EmbeddingTable& embeddings, const ModelParams& params, const ModelConfig& cfg,
                         std::size_t length_limit, std::size_t threads) {
  return mean_validation_rouge2(docs, embed_all(docs, vocab, embeddings), params, cfg, length_limit, threads);
}

double corpus_loss(std::span<const LabeledDocument> docs, const Vocabulary& vocab, const EmbeddingTable& embeddings,
                   const ModelParams& params, const ModelConfig& cfg, double w_pos) {
  if (docs.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& d : docs) {
    const auto embedded = encode_sentences(d.document, vocab, embeddings);
    const auto scores = score_sentences(d.document, embedded, params, cfg);
    total += weighted_bce_with_logits(scores.logits, d.labels, static_cast<Real>(w_pos)).item();
  }
  return total / static_cast<double>(docs.size());
}

TrainResult train(std::span<const LabeledDocument> train_docs, std::span<const LabeledDocument> val_docs,
                  const Vocabulary& vocab, const EmbeddingTable& embeddings, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, TrainHooks hooks) {
  mcfg.validate();
  tcfg.validate();
  if (train_docs.empty() || val_docs.empty()) throw std::invalid_argument("train: empty training or validation split");
  for (const auto& d : train_docs) {
    if (d.labels.size() != d.document.sentences.size()) {
      throw std::invalid_argument("train: document '" + d.document.id + "' has mismatched labels");
    }
  }

  Rng init_rng(tcfg.seed);
  ModelParams params = hooks.initial_params ? hooks.initial_params->clone() : ModelParams::init(mcfg, init_rng);
  std::vector<Tensor> trainable = params.trainable();
  for (auto& t : trainable) t.zero_grad();

  TrainResult result;
  result.w_pos = positive_weight(train_docs);
  const Real w_pos = static_cast<Real>(result.w_pos);
  const auto train_embedded = embed_all(train_docs, vocab, embeddings);
  const auto val_embedded = embed_all(val_docs, vocab, embeddings);

  AdamState adam;
  adam.lr = tcfg.lr;
  Rng order_rng(tcfg.seed ^ 0x5bd1e995ULL);
  Rng dropout_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ScoreOptions options{true, &dropout_rng};

  std::vector<std::size_t> order(train_docs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto started = std::chrono::steady_clock::now();
  double best_val = -1.0;

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    shuffle(order, order_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + tcfg.batch_size);
      const Real inv_batch = Real(1) / static_cast<Real>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const auto& doc = train_docs[order[k]];
        const auto scores = score_sentences(doc.document, train_embedded[order[k]], params, mcfg, options);
        Tensor loss = weighted_bce_with_logits(scores.logits, doc.labels, w_pos);
        if (!std::isfinite(loss.item())) {
          throw std::runtime_error("train: non-finite loss on document '" + doc.document.id + "' in epoch " +
                                   std::to_string(epoch));
        }
        epoch_loss += loss.item();
        scale_by(loss, inv_batch).backward();
      }
      adam_step(trainable, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(train_docs.size());
    entry.val_rouge2_f = mean_validation_rouge2(val_docs, val_embedded, params, mcfg, tcfg.length_limit, tcfg.threads);
    entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(entry);
    if (entry.val_rouge2_f > best_val) {
      best_val = entry.val_rouge2_f;
      result.best_epoch = epoch;
      result.best_params = params.clone();
    }
    if (hooks.on_epoch) hooks.on_epoch(entry);
  }
  result.final_params = std::move(params);
  return result;
}

// ---- evaluation ------------------------------------------------------------

SystemScores score_system(std::span<const Document> docs, std::span<const std::vector<std::string>> hypotheses) {
  if (docs.size() != hypotheses.size()) throw std::invalid_argument("score_system: one hypothesis per document");
  SystemScores out;
  out.per_document.reserve(docs.size());
  RougeTriple sum;
  auto accumulate = [](RougeScore& into, const RougeScore& s) {
    into.precision += s.precision;
    into.recall += s.recall;
    into.f1 += s.f1;
  };
  for (std::size_t k = 0; k < docs.size(); ++k) {
    const auto ref = docs[k].abstract_tokens();
    out.per_document.push_back(rouge_all(hypotheses[k], ref));
    accumulate(sum.rouge1, out.per_document.back().rouge1);
    accumulate(sum.rouge2, out.per_document.back().rouge2);
    accumulate(sum.rougeL, out.per_document.back().rougeL);
  }
  if (!docs.empty()) {
    const double n = static_cast<double>(docs.size());
    for (RougeScore* s : {&sum.rouge1, &sum.rouge2, &sum.rougeL}) {
      s->precision /= n;
      s->recall /= n;
      s->f1 /= n;
    }
  }
  out.mean = sum;
  return out;
}

std::vector<BucketRow> bucket_by_length(const EvalReport& report, std::span<const std::size_t> edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw std::invalid_argument("bucket edges must be strictly increasing");
  }
  std::vector<BucketRow> rows(edges.size() + 1);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    rows[b].lower = b == 0 ? 0 : edges[b - 1];
    if (b < edges.size()) rows[b].upper = edges[b];
  }
  std::vector<std::size_t> bucket_of(report.doc_words.size());
  for (std::size_t k = 0; k < report.doc_words.size(); ++k) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), report.doc_words[k]);
    bucket_of[k] = static_cast<std::size_t>(it - edges.begin());
    ++rows[bucket_of[k]].count;
  }
  for (const auto& [name, scores] : report.systems) {
    for (auto& row : rows) {
      row.mean_rouge1_f[name] = 0.0;
      row.mean_rouge2_f[name] = 0.0;
    }
    for (std::size_t k = 0; k < bucket_of.size(); ++k) {
      rows[bucket_of[k]].mean_rouge1_f[name] += scores.per_document[k].rouge1.f1;
      rows[bucket_of[k]].mean_rouge2_f[name] += scores.per_document[k].rouge2.f1;
    }
    for (auto& row : rows) {
      if (row.count == 0) continue;
      row.mean_rouge1_f[name] /= static_cast<double>(row.count);
      row.mean_rouge2_f[name] /= static_cast<double>(row.count);
    }
  }
  return rows;
}

ComparisonTable compare_systems(const SystemSeries& scores, std::size_t n_trials, std::uint64_t seed, double alpha) {
  ComparisonTable table;
  table.alpha = alpha;
  if (scores.empty()) return table;
  const std::size_t n = scores.begin()->second.size();
  double best_mean = 0.0;
  for (const auto& [name, s] : scores) {
    if (s.size() != n) {
      throw std::invalid_argument("compare_systems: system '" + name + "' was scored on " +
                                  std::to_string(s.size()) + " documents, expected " + std::to_string(n));
    }
    table.systems.push_back(name);
    const double mean = n ? std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n) : 0.0;
    if (table.best.empty() || mean > best_mean) {
      best_mean = mean;
      table.best = name;
    }
  }
  const std::size_t m = table.systems.size() * (table.systems.size() - 1) / 2;
  for (std::size_t i = 0; i < table.systems.size(); ++i) {
    for (std::size_t j = i + 1; j < table.systems.size(); ++j) {
      PairComparison pc;
      pc.first = table.systems[i];
      pc.second = table.systems[j];
      pc.test = approx_randomization(scores.at(pc.first), scores.at(pc.second), n_trials, seed);
      const double raw = pc.test.p_value;
      pc.corrected_p = bonferroni(std::span<const double>(&raw, 1), m)[0];
      pc.significant = pc.corrected_p < alpha;
      table.pairs.push_back(pc);
    }
  }
  table.ties.push_back(table.best);
  for (const auto& pc : table.pairs) {
    if (pc.significant) continue;
    if (pc.first == table.best) table.ties.push_back(pc.second);
    if (pc.second == table.best) table.ties.push_back(pc.first);
  }
  std::sort(table.ties.begin(), table.ties.end());
  return table;
}

EvalReport evaluate(std::span<const Document> docs, const ExtractiveModel& model, const EvalOptions& options) {
  if (options.length_limit == 0) throw std::invalid_argument("evaluate: length limit must be >= 1");
  EvalReport report;
  report.length_limit = options.length_limit;
  const std::size_t n = docs.size();
  std::vector<std::vector<std::string>> model_hyp(n), lead_hyp(n), oracle_hyp(n);
  parallel_for(n, options.threads, [&](std::size_t k) {
    const Document& doc = docs[k];
    const auto p = model.score(doc);
    const auto picked = extract_summary(doc, p, options.length_limit);
    model_hyp[k] = summary_tokens(doc, picked);
    lead_hyp[k] = lead_summary(doc, options.length_limit);
    const LabeledDocument labeled = doc.labels ? require_labels(doc) : generate_labels(doc, options.length_limit);
    const auto oracle = oracle_summary(labeled);
    oracle_hyp[k] = summary_tokens(doc, oracle);
  });
  for (const auto& d : docs) {
    report.doc_ids.push_back(d.id);
    report.doc_words.push_back(d.total_words());
  }
  report.systems["model"] = score_system(docs, model_hyp);
  report.systems["lead"] = score_system(docs, lead_hyp);
  report.systems["oracle"] = score_system(docs, oracle_hyp);
  report.buckets = bucket_by_length(report, options.bucket_edges);

  SystemSeries r2;
  for (const auto& [name, s] : report.systems) {
    auto& series = r2[name];
    for (const auto& t : s.per_document) series.push_back(t.rouge2.f1);
  }
  if (n > 0) report.comparison = compare_systems(r2, options.n_trials, options.seed);
  return report;
}

// ---- serialization ---------------------------------------------------------

namespace {

json score_json(const RougeScore& s) { return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}; }

json triple_json(const RougeTriple& t) {
  return {{"rouge1", score_json(t.rouge1)}, {"rouge2", score_json(t.rouge2)}, {"rougeL", score_json(t.rougeL)}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["length_limit"] = report.length_limit;
  json docs = json::array();
  for (std::size_t k = 0; k < report.doc_ids.size(); ++k) {
    docs.push_back({{"id", report.doc_ids[k]}, {"words", report.doc_words[k]}});
  }
  j["documents"] = std::move(docs);
  json systems = json::object();
  for (const auto& [name, s] : report.systems) {
    json per_doc = json::array();
    for (std::size_t k = 0; k < s.per_document.size(); ++k) {
      const auto& t = s.per_document[k];
      per_doc.push_back({{"id", report.doc_ids.at(k)},
                         {"rouge1_f", t.rouge1.f1},
                         {"rouge2_f", t.rouge2.f1},
                         {"rougeL_f", t.rougeL.f1}});
    }
    systems[name] = {{"mean", triple_json(s.mean)}, {"per_document", std::move(per_doc)}};
  }
  j["systems"] = std::move(systems);
  json buckets = json::array();
  for (const auto& b : report.buckets) {
    json row = {{"lower", b.lower}, {"count", b.count}, {"mean_rouge1_f", b.mean_rouge1_f},
                {"mean_rouge2_f", b.mean_rouge2_f}};
    row["upper"] = b.upper ? json(*b.upper) : json(nullptr);
    buckets.push_back(std::move(row));
  }
  j["buckets"] = std::move(buckets);
  json pairs = json::array();
  for (const auto& pc : report.comparison.pairs) {
    pairs.push_back({{"first", pc.first},
                     {"second", pc.second},
                     {"observed_delta", pc.test.observed_delta},
                     {"p_value", pc.test.p_value},
                     {"corrected_p", pc.corrected_p},
                     {"n_trials", pc.test.n_trials},
                     {"significant", pc.significant}});
  }
  j["significance"] = {{"metric", "rouge2_f"},
                       {"alpha", report.comparison.alpha},
                       {"best", report.comparison.best},
                       {"ties", report.comparison.ties},
                       {"pairs", std::move(pairs)}};
  return j.dump(2);
}

std::string buckets_to_tsv(const EvalReport& report) {
  std::ostringstream os;
  os << "lower\tupper\tcount";
  for (const auto& [name, s] : report.systems) os << '\t' << name << "_rouge1_f\t" << name << "_rouge2_f";
  os << '\n';
  for (const auto& b : report.buckets) {
    os << b.lower << '\t' << (b.upper ? std::to_string(*b.upper) : std::string("inf")) << '\t' << b.count;
    for (const auto& [name, s] : report.systems) {
      os << '\t' << json(b.mean_rouge1_f.at(name)).dump() << '\t' << json(b.mean_rouge2_f.at(name)).dump();
    }
    os << '\n';
  }
  return os.str();
}

ReportSeries read_report_series(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
  ReportSeries out;
  for (const auto& d : j.at("documents")) out.doc_ids.push_back(d.at("id").get<std::string>());
  for (const auto& [name, s] : j.at("systems").items()) {
    auto& series = out.rouge2_f[name];
    std::size_t k = 0;
    for (const auto& row : s.at("per_document")) {
      if (k >= out.doc_ids.size() || row.at("id").get<std::string>() != out.doc_ids[k]) {
        throw std::runtime_error("report system '" + name + "' does not follow the document list");
      }
      series.push_back(row.at("rouge2_f").get<double>());
      ++k;
    }
    if (k != out.doc_ids.size()) throw std::runtime_error("report system '" + name + "' is missing documents");
  }
  return out;
}

}  // namespace extsum
