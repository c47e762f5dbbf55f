#include "extsum/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace extsum {

using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

Tensor uniform(Shape shape, Real bound, Rng& rng) {
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor::from(std::move(v), std::move(shape), true);
}

}  // namespace

std::string_view to_string(DecoderKind kind) {
  return kind == DecoderKind::kConcat ? "concat" : "attentive";
}

DecoderKind parse_decoder(std::string_view name) {
  if (name == "concat") return DecoderKind::kConcat;
  if (name == "attentive") return DecoderKind::kAttentive;
  throw std::invalid_argument("unknown decoder '" + std::string(name) + "' (expected concat or attentive)");
}

std::size_t ModelConfig::decoder_input_width() const {
  if (decoder == DecoderKind::kAttentive) return 4 * d_hid;
  return 2 * d_hid * (1 + (use_local ? 1 : 0) + (use_global ? 1 : 0));
}

void ModelConfig::validate() const {
  if (d_emb == 0 || d_hid == 0 || d_mlp == 0) throw std::invalid_argument("model dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (decoder == DecoderKind::kAttentive && !(use_local && use_global)) {
    throw std::invalid_argument("the attentive decoder needs both local and global context");
  }
}

void apply_ablation(ModelConfig& cfg, std::string_view name) {
  if (name == "bsl") {
    cfg.use_local = false;
    cfg.use_global = false;
  } else if (name == "bsl+l") {
    cfg.use_local = true;
    cfg.use_global = false;
  } else if (name == "bsl+g") {
    cfg.use_local = false;
    cfg.use_global = true;
  } else if (name == "bsl+l+g") {
    cfg.use_local = true;
    cfg.use_global = true;
    return;
  } else {
    throw std::invalid_argument("unknown ablation '" + std::string(name) +
                                "' (expected bsl, bsl+l, bsl+g or bsl+l+g)");
  }
  cfg.decoder = DecoderKind::kConcat;
}

std::string ablation_name(const ModelConfig& cfg) {
  std::string s = "bsl";
  if (cfg.use_local) s += "+l";
  if (cfg.use_global) s += "+g";
  return s;
}

// ---- parameters ------------------------------------------------------------

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(cfg.d_hid));
  ModelParams p;
  p.forward = GruParams::init(cfg.d_emb, cfg.d_hid, rng);
  p.backward = GruParams::init(cfg.d_emb, cfg.d_hid, rng);
  if (cfg.decoder == DecoderKind::kAttentive) {
    p.attn_v = uniform({cfg.attention_dim()}, bound, rng);
    p.attn_w = uniform({cfg.attention_dim(), 4 * cfg.d_hid}, bound, rng);
  }
  p.mlp_w = uniform({cfg.d_mlp, cfg.decoder_input_width()}, bound, rng);
  p.mlp_b = Tensor::zeros({cfg.d_mlp}, true);
  p.out_w = uniform({1, cfg.d_mlp}, bound, rng);
  p.out_b = Tensor::zeros({1}, true);
  return p;
}

NamedTensors ModelParams::named() const {
  NamedTensors out = forward.named("gru.forward");
  for (auto& e : backward.named("gru.backward")) out.push_back(std::move(e));
  if (attn_v.defined()) {
    out.emplace_back("attention.v", attn_v);
    out.emplace_back("attention.w", attn_w);
  }
  out.emplace_back("mlp.w", mlp_w);
  out.emplace_back("mlp.b", mlp_b);
  out.emplace_back("output.w", out_w);
  out.emplace_back("output.b", out_b);
  return out;
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ModelParams ModelParams::clone() const {
  auto copy_gru = [](const GruParams& g) {
    return GruParams{g.w_reset.clone(true),  g.w_update.clone(true), g.w_new.clone(true),
                     g.u_reset.clone(true),  g.u_update.clone(true), g.u_new.clone(true),
                     g.b_reset.clone(true),  g.b_update.clone(true), g.b_new.clone(true)};
  };
  ModelParams p;
  p.forward = copy_gru(forward);
  p.backward = copy_gru(backward);
  if (attn_v.defined()) {
    p.attn_v = attn_v.clone(true);
    p.attn_w = attn_w.clone(true);
  }
  p.mlp_w = mlp_w.clone(true);
  p.mlp_b = mlp_b.clone(true);
  p.out_w = out_w.clone(true);
  p.out_b = out_b.clone(true);
  return p;
}

// ---- encoders --------------------------------------------------------------

Tensor encode_sentence(const Sentence& sentence, const Vocabulary& vocab, const EmbeddingTable& table) {
  std::vector<Real> mean(table.dim, Real(0));
  if (sentence.tokens.empty()) return Tensor::vector(std::move(mean));
  for (const auto& tok : sentence.tokens) {
    const auto row = table.row(vocab.id(tok));
    for (std::size_t k = 0; k < table.dim; ++k) mean[k] += row[k];
  }
  const Real n = static_cast<Real>(sentence.tokens.size());
  for (auto& v : mean) v /= n;
  return Tensor::vector(std::move(mean));
}

std::vector<Tensor> encode_sentences(const Document& doc, const Vocabulary& vocab, const EmbeddingTable& table) {
  std::vector<Tensor> out;
  out.reserve(doc.sentences.size());
  for (const auto& s : doc.sentences) out.push_back(encode_sentence(s, vocab, table));
  return out;
}

std::vector<Tensor> segment_representations(std::span<const Tensor> forward, std::span<const Tensor> backward,
                                            std::span<const SectionSpan> sections) {
  const std::size_t n = forward.size();
  if (n == 0 || backward.size() != n) throw std::invalid_argument("segment_representations: bad hidden states");
  const Tensor zero = Tensor::zeros({forward[0].size()});
  std::vector<Tensor> out;
  out.reserve(sections.size());
  for (const auto& s : sections) {
    if (s.end >= n || s.start > s.end) throw std::invalid_argument("segment_representations: bad section span");
    const Tensor& before = s.start > 0 ? forward[s.start - 1] : zero;
    const Tensor& after = s.end + 1 < n ? backward[s.end + 1] : zero;
    out.push_back(concat({sub(forward[s.end], before), sub(backward[s.start], after)}));
  }
  return out;
}

DocumentEncoding encode_document(const Document& doc, std::span<const Tensor> sentence_embeddings,
                                 const ModelParams& params) {
  if (doc.sentences.empty()) throw std::invalid_argument("encode_document: empty document '" + doc.id + "'");
  if (sentence_embeddings.size() != doc.sentences.size()) {
    throw std::invalid_argument("encode_document: one embedding per sentence required");
  }
  DocumentEncoding enc;
  enc.states = run_bigru(sentence_embeddings, params.forward, params.backward);
  const std::size_t n = doc.sentences.size();
  enc.sentences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) enc.sentences.push_back(concat({enc.states.forward[i], enc.states.backward[i]}));
  enc.document = concat({enc.states.forward[n - 1], enc.states.backward[0]});
  enc.segments = segment_representations(enc.states.forward, enc.states.backward, doc.sections);
  enc.section_of.resize(n);
  for (std::size_t t = 0; t < doc.sections.size(); ++t) {
    for (std::size_t i = doc.sections[t].start; i <= doc.sections[t].end; ++i) enc.section_of[i] = t;
  }
  return enc;
}

// ---- decoders --------------------------------------------------------------

namespace {

Tensor global_view(const DocumentEncoding& enc, const ModelConfig& cfg) {
  return cfg.zero_global_input ? Tensor::zeros({enc.document.size()}) : enc.document;
}

}  // namespace

Tensor decode_concat(const DocumentEncoding& enc, std::size_t i, const ModelConfig& cfg) {
  std::vector<Tensor> parts;
  if (cfg.use_global) parts.push_back(global_view(enc, cfg));
  if (cfg.use_local) parts.push_back(enc.segments[enc.section_of.at(i)]);
  parts.push_back(enc.sentences.at(i));
  return concat(parts);
}

AttentionWeights attention_weights(const DocumentEncoding& enc, std::size_t i, const ModelParams& params,
                                   const ModelConfig& cfg) {
  const Tensor& sr = enc.sentences.at(i);
  const Tensor& local = enc.segments[enc.section_of.at(i)];
  const Tensor global = global_view(enc, cfg);
  Tensor score_global = dot(params.attn_v, tanh(matvec(params.attn_w, concat({global, sr}))));
  Tensor score_local = dot(params.attn_v, tanh(matvec(params.attn_w, concat({local, sr}))));
  Tensor denominator = add(score_global, score_local);
  AttentionWeights w;
  if (std::abs(denominator.item()) < kAttentionGuard) {
    w.global = Tensor::scalar(Real(0.5));
    w.local = Tensor::scalar(Real(0.5));
    w.fallback = true;
  } else {
    // score_l / (score_d + score_l) written as 1 - weight_d so the pair sums to one
    w.global = divide(score_global, denominator);
    w.local = sub(Tensor::scalar(Real(1)), w.global);
  }
  return w;
}

Tensor decode_attentive(const DocumentEncoding& enc, std::size_t i, const ModelParams& params,
                        const ModelConfig& cfg, std::size_t* fallbacks) {
  const AttentionWeights w = attention_weights(enc, i, params, cfg);
  if (w.fallback && fallbacks) ++*fallbacks;
  const Tensor& local = enc.segments[enc.section_of.at(i)];
  Tensor context = add(scale(global_view(enc, cfg), w.global), scale(local, w.local));
  return concat({enc.sentences.at(i), context});
}

Tensor score_sentence(const DocumentEncoding& enc, std::size_t i, const ModelParams& params,
                      const ModelConfig& cfg, const ScoreOptions& options, std::size_t* fallbacks) {
  Tensor input = cfg.decoder == DecoderKind::kAttentive ? decode_attentive(enc, i, params, cfg, fallbacks)
                                                        : decode_concat(enc, i, cfg);
  Tensor hidden = relu(add(matvec(params.mlp_w, input), params.mlp_b));
  if (options.training && cfg.dropout > 0.0) {
    if (!options.rng) throw std::invalid_argument("score_sentence: training with dropout needs an Rng");
    hidden = dropout(hidden, static_cast<Real>(cfg.dropout), true, *options.rng);
  }
  return add(matvec(params.out_w, hidden), params.out_b);
}

SentenceScores score_sentences(const Document& doc, std::span<const Tensor> sentence_embeddings,
                               const ModelParams& params, const ModelConfig& cfg, const ScoreOptions& options) {
  const DocumentEncoding enc = encode_document(doc, sentence_embeddings, params);
  SentenceScores out;
  std::vector<Tensor> logits;
  logits.reserve(doc.sentences.size());
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    logits.push_back(score_sentence(enc, i, params, cfg, options, &out.attention_fallbacks));
  }
  out.logits = concat(logits);
  out.probabilities.reserve(logits.size());
  for (auto z : out.logits.values()) {
    out.probabilities.push_back(z >= 0 ? 1.0 / (1.0 + std::exp(-double(z))) : std::exp(double(z)) / (1.0 + std::exp(double(z))));
  }
  return out;
}

// ---- persisted model -------------------------------------------------------

ExtractiveModel::ExtractiveModel(ModelConfig cfg, ModelParams params, Vocabulary vocab, EmbeddingTable embeddings)
    : cfg_(cfg), params_(std::move(params)), vocab_(std::move(vocab)), embeddings_(std::move(embeddings)) {
  cfg_.validate();
  if (embeddings_.rows != vocab_.size() || embeddings_.dim != cfg_.d_emb) {
    throw std::invalid_argument("embedding table does not match vocabulary size and d_emb");
  }
}

std::vector<double> ExtractiveModel::score(const Document& doc) const {
  NoGradGuard no_grad;
  const auto embedded = encode_sentences(doc, vocab_, embeddings_);
  return score_sentences(doc, embedded, params_, cfg_).probabilities;
}

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["d_emb"] = cfg.d_emb;
  j["d_hid"] = cfg.d_hid;
  j["d_mlp"] = cfg.d_mlp;
  j["d_attn"] = cfg.attention_dim();
  j["decoder"] = std::string(to_string(cfg.decoder));
  j["use_local"] = cfg.use_local;
  j["use_global"] = cfg.use_global;
  j["dropout"] = cfg.dropout;
  return j.dump(2);
}

ModelConfig config_from_json(std::string_view text) {
  const json j = json::parse(text);
  ModelConfig cfg;
  cfg.d_emb = j.at("d_emb").get<std::size_t>();
  cfg.d_hid = j.at("d_hid").get<std::size_t>();
  cfg.d_mlp = j.at("d_mlp").get<std::size_t>();
  cfg.d_attn = j.at("d_attn").get<std::size_t>();
  cfg.decoder = parse_decoder(j.at("decoder").get<std::string>());
  cfg.use_local = j.at("use_local").get<bool>();
  cfg.use_global = j.at("use_global").get<bool>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.validate();
  return cfg;
}

void ExtractiveModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "extsum-model";
  manifest["version"] = kManifestVersion;
  manifest["model"] = json::parse(config_to_json(cfg_));
  manifest["parameters"] = "model.bin";
  manifest["embeddings"] = "embeddings.bin";
  manifest["vocabulary"] = "vocab.txt";
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
  save_checkpoint(dir / "model.bin", params_.named());
  save_checkpoint(dir / "embeddings.bin",
                  {{"embedding", Tensor::from(embeddings_.values, {embeddings_.rows, embeddings_.dim})}});
  vocab_.save(dir / "vocab.txt");
}

ModelConfig ExtractiveModel::load_config(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no model manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "extsum-model" || manifest.value("version", 0) != kManifestVersion) {
    throw std::runtime_error("unsupported model manifest in " + dir.string());
  }
  return config_from_json(manifest.at("model").dump());
}

ExtractiveModel ExtractiveModel::load(const std::filesystem::path& dir) {
  const ModelConfig cfg = load_config(dir);
  Rng rng(0);
  ModelParams params = ModelParams::init(cfg, rng);
  NamedTensors target = params.named();
  assign_parameters(load_checkpoint(dir / "model.bin"), target);

  Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
  auto emb = load_checkpoint(dir / "embeddings.bin");
  if (emb.size() != 1 || emb[0].first != "embedding" || emb[0].second.shape().size() != 2) {
    throw std::runtime_error("malformed embeddings.bin in " + dir.string());
  }
  EmbeddingTable table;
  table.rows = emb[0].second.rows();
  table.dim = emb[0].second.cols();
  table.values.assign(emb[0].second.values().begin(), emb[0].second.values().end());
  table.coverage = 1.0;
  return ExtractiveModel(cfg, std::move(params), std::move(vocab), std::move(table));
}

}  // namespace extsum
