#include "extsum/commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "extsum/parallel.hpp"
#include "json.hpp"

namespace extsum {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw std::runtime_error("cannot write " + path.string());
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError("invalid value '" + value + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("invalid value '" + value + "' for " + key + " (expected true or false)");
}

void require_file(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("no ") + what + " path configured");
  if (!std::filesystem::exists(path)) throw UsageError(std::string(what) + " not found: " + path.string());
}

std::vector<LabeledDocument> labeled_split(const std::filesystem::path& path, const LoadOptions& options,
                                           std::ostream& err) {
  auto loaded = load_corpus(path, options);
  if (loaded.skipped) err << path.string() << ": skipped " << loaded.skipped << " empty documents\n";
  std::vector<LabeledDocument> out;
  out.reserve(loaded.documents.size());
  for (const auto& d : loaded.documents) {
    if (!d.labels) {
      throw std::runtime_error(path.string() + ": document '" + d.id +
                               "' has no oracle labels; run `extsum label` on this corpus first");
    }
    out.push_back(require_labels(d));
  }
  return out;
}

json epoch_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_rouge2_f", e.val_rouge2_f}, {"wall_time", e.wall_time}};
}

}  // namespace

// ---- run configuration -----------------------------------------------------

std::vector<std::size_t> parse_bucket_edges(std::string_view text) {
  std::vector<std::size_t> edges;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
    if (item.empty()) continue;
    edges.push_back(parse_number<std::size_t>("buckets", item));
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw UsageError("bucket edges must be strictly increasing");
  }
  return edges;
}

void set_run_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto model_key = [&] { cfg.model_overridden = true; };
  if (key == "train") cfg.train_path = value;
  else if (key == "val") cfg.val_path = value;
  else if (key == "test") cfg.test_path = value;
  else if (key == "embeddings") cfg.embeddings_path = value;
  else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
  else if (key == "report_dir") cfg.report_dir = value;
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lr") cfg.train.lr = parse_number<double>(key, value);
  else if (key == "batch_size") cfg.train.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "max_epochs") cfg.train.max_epochs = parse_number<std::size_t>(key, value);
  else if (key == "length_limit") cfg.train.length_limit = parse_number<std::size_t>(key, value);
  else if (key == "threads") cfg.train.threads = std::max<std::size_t>(1, parse_number<std::size_t>(key, value));
  else if (key == "vocab_cap") cfg.vocab_cap = parse_number<std::size_t>(key, value);
  else if (key == "max_sentences") cfg.max_sentences = parse_number<std::size_t>(key, value);
  else if (key == "n_trials") cfg.n_trials = parse_number<std::size_t>(key, value);
  else if (key == "buckets") cfg.bucket_edges = parse_bucket_edges(value);
  else if (key == "d_emb") { model_key(); cfg.model.d_emb = parse_number<std::size_t>(key, value); }
  else if (key == "d_hid") { model_key(); cfg.model.d_hid = parse_number<std::size_t>(key, value); }
  else if (key == "d_mlp") { model_key(); cfg.model.d_mlp = parse_number<std::size_t>(key, value); }
  else if (key == "d_attn") { model_key(); cfg.model.d_attn = parse_number<std::size_t>(key, value); }
  else if (key == "dropout") { model_key(); cfg.model.dropout = parse_number<double>(key, value); }
  else if (key == "decoder") {
    model_key();
    try {
      cfg.model.decoder = parse_decoder(value);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else if (key == "use_local") { model_key(); cfg.model.use_local = parse_bool(key, value); }
  else if (key == "use_global") { model_key(); cfg.model.use_global = parse_bool(key, value); }
  else if (key == "ablation") {
    model_key();
    try {
      apply_ablation(cfg.model, value);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    throw UsageError("unknown configuration key '" + key + "'");
  }
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed configuration: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("configuration must be a JSON object");
  RunConfig cfg;
  // "ablation" is applied first so that an explicit decoder or flag wins.
  if (j.contains("ablation")) set_run_config_value(cfg, "ablation", j["ablation"].get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (key == "ablation") continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& v : value) text += (text.empty() ? "" : ",") + v.dump();
    } else {
      text = value.dump();
    }
    set_run_config_value(cfg, key, text);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg = parse_run_config(read_file(path));
  const auto base = path.parent_path();
  for (auto* p : {&cfg.train_path, &cfg.val_path, &cfg.test_path, &cfg.embeddings_path, &cfg.checkpoint_dir,
                  &cfg.report_dir}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return cfg;
}

// ---- label -----------------------------------------------------------------

int cmd_label(const LabelOptions& options, std::ostream& err) {
  if (options.length_limit == 0) throw UsageError("--limit must be at least 1");
  std::ifstream in(options.input);
  if (!in) throw std::runtime_error("cannot open " + options.input.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }

  LoadOptions load;
  load.max_sentences = options.max_sentences;
  std::vector<std::optional<std::string>> output(lines.size());
  std::vector<std::size_t> positives(lines.size(), 0), sentences(lines.size(), 0);
  parallel_for(lines.size(), options.threads, [&](std::size_t k) {
    auto doc = parse_document(lines[k], k + 1, load);
    if (!doc) return;
    doc->labels.reset();
    const auto labeled = generate_labels(*doc, options.length_limit);
    json merged = json::parse(lines[k]);
    merged.update(json::parse(serialize_document(attach_labels(labeled))));
    output[k] = merged.dump();
    sentences[k] = labeled.labels.size();
    for (int y : labeled.labels) positives[k] += static_cast<std::size_t>(y);
  });

  std::ostringstream text;
  std::size_t docs = 0, skipped = 0, pos = 0, total = 0;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (!output[k]) {
      ++skipped;
      continue;
    }
    text << *output[k] << '\n';
    ++docs;
    pos += positives[k];
    total += sentences[k];
  }
  write_file(options.output, text.str());
  err << "labeled " << docs << " documents (" << skipped << " skipped), " << pos << " of " << total
      << " sentences positive";
  if (total) err << " (rate " << static_cast<double>(pos) / static_cast<double>(total) << ")";
  err << '\n';
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.seed) throw UsageError("training requires an explicit seed (config key `seed` or --seed)");
  require_file(cfg.train_path, "training corpus");
  require_file(cfg.val_path, "validation corpus");
  require_file(cfg.embeddings_path, "embeddings");
  if (cfg.checkpoint_dir.empty()) throw UsageError("no checkpoint_dir configured");
  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  LoadOptions load;
  load.max_sentences = cfg.max_sentences;
  const auto train_docs = labeled_split(cfg.train_path, load, err);
  const auto val_docs = labeled_split(cfg.val_path, load, err);
  if (train_docs.empty() || val_docs.empty()) throw std::runtime_error("training and validation splits must be non-empty");

  std::vector<Document> plain;
  plain.reserve(train_docs.size());
  for (const auto& d : train_docs) plain.push_back(d.document);
  Vocabulary vocab = build_vocabulary(plain, cfg.vocab_cap);
  EmbeddingTable table = load_embeddings(cfg.embeddings_path, vocab, cfg.model.d_emb);
  err << "vocabulary " << vocab.size() << " tokens, embedding coverage " << table.coverage << '\n';

  TrainConfig tcfg = cfg.train;
  tcfg.seed = *cfg.seed;
  std::filesystem::create_directories(cfg.checkpoint_dir);
  std::ofstream log(cfg.checkpoint_dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log in " + cfg.checkpoint_dir.string());

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    log << epoch_json(e).dump() << '\n' << std::flush;
    err << "epoch " << e.epoch << " loss " << e.train_loss << " val_rouge2_f " << e.val_rouge2_f << '\n';
  };
  TrainResult result = train(train_docs, val_docs, vocab, table, cfg.model, tcfg, std::move(hooks));

  ExtractiveModel model(cfg.model, std::move(result.best_params), std::move(vocab), std::move(table));
  model.save(cfg.checkpoint_dir);
  json summary = {{"best_epoch", result.best_epoch},
                  {"best_val_rouge2_f", result.log.at(result.best_epoch - 1).val_rouge2_f},
                  {"w_pos", result.w_pos},
                  {"ablation", ablation_name(cfg.model)},
                  {"seed", *cfg.seed},
                  {"lr", tcfg.lr},
                  {"batch_size", tcfg.batch_size},
                  {"max_epochs", tcfg.max_epochs},
                  {"length_limit", tcfg.length_limit}};
  write_file(cfg.checkpoint_dir / "training.json", summary.dump(2) + "\n");
  err << "best epoch " << result.best_epoch << ", checkpoint written to " << cfg.checkpoint_dir.string() << '\n';
  return 0;
}

// ---- evaluate --------------------------------------------------------------

int cmd_evaluate(const RunConfig& cfg, std::ostream& err) {
  require_file(cfg.test_path, "test corpus");
  require_file(cfg.checkpoint_dir, "checkpoint");
  if (cfg.report_dir.empty()) throw UsageError("no report_dir configured");
  if (cfg.train.length_limit == 0) throw UsageError("length limit must be at least 1");

  ExtractiveModel model = ExtractiveModel::load(cfg.checkpoint_dir);
  if (cfg.model_overridden && config_to_json(cfg.model) != config_to_json(model.config())) {
    throw std::runtime_error("model configuration does not match the checkpoint manifest in " +
                             cfg.checkpoint_dir.string() + ":\nconfig: " + config_to_json(cfg.model) +
                             "\nmanifest: " + config_to_json(model.config()));
  }

  LoadOptions load;
  load.max_sentences = cfg.max_sentences;
  auto loaded = load_corpus(cfg.test_path, load);
  if (loaded.skipped) err << cfg.test_path.string() << ": skipped " << loaded.skipped << " empty documents\n";

  EvalOptions options;
  options.length_limit = cfg.train.length_limit;
  options.bucket_edges = cfg.bucket_edges;
  options.n_trials = cfg.n_trials;
  options.seed = cfg.seed.value_or(0);
  options.threads = cfg.train.threads;
  const EvalReport report = evaluate(loaded.documents, model, options);

  std::filesystem::create_directories(cfg.report_dir);
  write_file(cfg.report_dir / "report.json", report_to_json(report) + "\n");
  write_file(cfg.report_dir / "buckets.tsv", buckets_to_tsv(report));
  for (const auto& [name, s] : report.systems) {
    err << name << ": R1 " << s.mean.rouge1.f1 << " R2 " << s.mean.rouge2.f1 << " RL " << s.mean.rougeL.f1 << '\n';
  }
  return 0;
}

// ---- summarize -------------------------------------------------------------

int cmd_summarize(const SummarizeOptions& options, std::ostream& out, std::ostream& err) {
  if (options.length_limit == 0) throw UsageError("--limit must be at least 1");
  const ExtractiveModel model = ExtractiveModel::load(options.checkpoint);
  LoadOptions load;
  load.max_sentences = options.max_sentences;
  load.require_abstract = false;

  const std::string text = read_file(options.input);
  std::vector<Document> docs;
  // A whole-file JSON object is one document; otherwise one per line.
  if (json::accept(text)) {
    if (auto d = parse_document(json::parse(text).dump(), 1, load)) docs.push_back(std::move(*d));
  } else {
    std::istringstream in(text);
    auto loaded = read_corpus(in, load);
    docs = std::move(loaded.documents);
  }
  if (docs.empty()) {
    err << "no documents with sentences in " << options.input.string() << '\n';
    return 1;
  }
  for (std::size_t k = 0; k < docs.size(); ++k) {
    if (k) out << '\n';
    const auto p = model.score(docs[k]);
    for (std::size_t i : extract_summary(docs[k], p, options.length_limit)) {
      if (options.verbose) out << i << '\t' << p[i] << '\t';
      out << docs[k].sentences[i].text << '\n';
    }
  }
  return 0;
}

// ---- rouge -----------------------------------------------------------------

int cmd_rouge(const std::filesystem::path& hypothesis, const std::filesystem::path& reference, std::ostream& out) {
  auto tokens_of = [](const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
      auto s = tokenize(line);
      tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
    }
    return tokens;
  };
  const auto scores = rouge_all(tokens_of(hypothesis), tokens_of(reference));
  auto entry = [](const RougeScore& s) {
    return json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  json j = {{"rouge1", entry(scores.rouge1)}, {"rouge2", entry(scores.rouge2)}, {"rougeL", entry(scores.rougeL)}};
  out << j.dump(2) << '\n';
  return 0;
}

// ---- compare ---------------------------------------------------------------

int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err) {
  if (!options.seed) throw UsageError("compare requires an explicit --seed");
  if (options.n_trials == 0) throw UsageError("--trials must be at least 1");
  if (options.reports.empty()) throw UsageError("compare needs at least two systems; no reports given");

  SystemSeries series;
  std::vector<std::string> doc_ids;
  const bool prefix = options.reports.size() > 1;
  for (const auto& path : options.reports) {
    ReportSeries r = read_report_series(read_file(path));
    if (doc_ids.empty()) {
      doc_ids = r.doc_ids;
    } else if (r.doc_ids != doc_ids) {
      throw std::runtime_error(path.string() + " was evaluated on a different document set");
    }
    for (auto& [name, s] : r.rouge2_f) {
      const std::string key = prefix ? path.stem().string() + ":" + name : name;
      if (!series.emplace(key, std::move(s)).second) throw UsageError("duplicate system name '" + key + "'");
    }
  }
  if (series.size() < 2) throw UsageError("compare needs at least two systems");

  const ComparisonTable table = compare_systems(series, options.n_trials, *options.seed, options.alpha);
  out << "first\tsecond\tdelta\tp\tcorrected_p\tsignificant\n";
  for (const auto& pc : table.pairs) {
    out << pc.first << '\t' << pc.second << '\t' << pc.test.observed_delta << '\t' << pc.test.p_value << '\t'
        << pc.corrected_p << '\t' << (pc.significant ? "yes" : "no") << '\n';
  }
  out << "best\t" << table.best << '\n';
  out << "not distinguished from best (alpha " << table.alpha << "):";
  for (const auto& t : table.ties) out << ' ' << t;
  out << '\n';
  err << table.pairs.size() << " comparisons, Bonferroni factor " << table.pairs.size() << '\n';
  return 0;
}

}  // namespace extsum
