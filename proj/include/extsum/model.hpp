#pragma once

// Extractive sentence scorer for long, sectioned documents.
//
// Sentences are embedded as the mean of their word vectors and read by a
// bidirectional GRU. Each sentence decision sees three views:
//   sentence  sr_i = [h_fwd[i] ; h_bwd[i]]
//   document  d    = [h_fwd[n-1] ; h_bwd[0]]
//   section   l_t  = [h_fwd[end] - h_fwd[start-1] ; h_bwd[start] - h_bwd[end+1]]
// where hidden states outside [0, n-1] read as zero. A concatenation or an
// attentive decoder merges the views and an MLP + sigmoid yields p_i.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extsum/checkpoint.hpp"
#include "extsum/corpus.hpp"
#include "extsum/gru.hpp"
#include "extsum/tensor.hpp"

namespace extsum {

enum class DecoderKind { kConcat, kAttentive };

std::string_view to_string(DecoderKind kind);
DecoderKind parse_decoder(std::string_view name);

struct ModelConfig {
  std::size_t d_emb = 300;
  std::size_t d_hid = 300;
  std::size_t d_mlp = 100;
  std::size_t d_attn = 0;  // 0 means 2 * d_hid
  DecoderKind decoder = DecoderKind::kConcat;
  bool use_local = true;
  bool use_global = true;
  double dropout = 0.3;
  // Feeds a zero vector in place of the document representation at the
  // decoder. Used to check ablation wiring; never persisted.
  bool zero_global_input = false;

  std::size_t attention_dim() const { return d_attn ? d_attn : 2 * d_hid; }
  std::size_t decoder_input_width() const;
  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

// Sets use_local/use_global from "bsl", "bsl+l", "bsl+g" or "bsl+l+g".
// BSL, BSL+l and BSL+g force the concatenation decoder.
void apply_ablation(ModelConfig& cfg, std::string_view name);
std::string ablation_name(const ModelConfig& cfg);

struct ModelParams {
  GruParams forward;
  GruParams backward;
  Tensor attn_v;  // d_attn, attentive decoder only
  Tensor attn_w;  // d_attn x 4*d_hid, attentive decoder only
  Tensor mlp_w;   // d_mlp x input width
  Tensor mlp_b;   // d_mlp
  Tensor out_w;   // 1 x d_mlp
  Tensor out_b;   // 1

  static ModelParams init(const ModelConfig& cfg, Rng& rng);
  NamedTensors named() const;
  std::vector<Tensor> trainable() const;
  ModelParams clone() const;
};

struct DocumentEncoding {
  BiGruStates states;
  std::vector<Tensor> sentences;  // sr_i, 2*d_hid each
  Tensor document;                // d, 2*d_hid
  std::vector<Tensor> segments;   // l_t, one per section
  std::vector<std::size_t> section_of;
};

// Mean of the embedding rows of the sentence tokens (UNK rows count as
// zeros). A sentence without tokens maps to the zero vector.
Tensor encode_sentence(const Sentence& sentence, const Vocabulary& vocab, const EmbeddingTable& table);
std::vector<Tensor> encode_sentences(const Document& doc, const Vocabulary& vocab, const EmbeddingTable& table);

// Section representations from precomputed hidden states; spans are inclusive.
std::vector<Tensor> segment_representations(std::span<const Tensor> forward, std::span<const Tensor> backward,
                                            std::span<const SectionSpan> sections);

DocumentEncoding encode_document(const Document& doc, std::span<const Tensor> sentence_embeddings,
                                 const ModelParams& params);

// (d : l_t : sr_i) with the disabled views left out.
Tensor decode_concat(const DocumentEncoding& enc, std::size_t i, const ModelConfig& cfg);

inline constexpr Real kAttentionGuard = 1e-8;

struct AttentionWeights {
  Tensor global;  // weight on d
  Tensor local;   // weight on l_t
  bool fallback = false;
};

AttentionWeights attention_weights(const DocumentEncoding& enc, std::size_t i, const ModelParams& params,
                                   const ModelConfig& cfg);

// (sr_i : weight_d * d + weight_l * l_t). When |score_d + score_l| falls below
// kAttentionGuard both weights are 0.5 and `fallbacks` is incremented.
Tensor decode_attentive(const DocumentEncoding& enc, std::size_t i, const ModelParams& params,
                        const ModelConfig& cfg, std::size_t* fallbacks = nullptr);

struct ScoreOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

// Logit of sentence i.
Tensor score_sentence(const DocumentEncoding& enc, std::size_t i, const ModelParams& params,
                      const ModelConfig& cfg, const ScoreOptions& options, std::size_t* fallbacks = nullptr);

struct SentenceScores {
  Tensor logits;  // one per sentence
  std::vector<double> probabilities;
  std::size_t attention_fallbacks = 0;
};

SentenceScores score_sentences(const Document& doc, std::span<const Tensor> sentence_embeddings,
                               const ModelParams& params, const ModelConfig& cfg, const ScoreOptions& options = {});

// A trained model together with the vocabulary and embeddings it reads.
//
// On disk a checkpoint is a directory holding
//   manifest.json   model configuration and format version
//   model.bin       trainable parameters (see checkpoint.hpp)
//   embeddings.bin  frozen embedding table, single tensor "embedding"
//   vocab.txt       one token per line in id order
class ExtractiveModel {
 public:
  ExtractiveModel(ModelConfig cfg, ModelParams params, Vocabulary vocab, EmbeddingTable embeddings);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  const EmbeddingTable& embeddings() const { return embeddings_; }

  // Inference-mode probabilities, one per sentence.
  std::vector<double> score(const Document& doc) const;

  void save(const std::filesystem::path& dir) const;
  static ExtractiveModel load(const std::filesystem::path& dir);
  static ModelConfig load_config(const std::filesystem::path& dir);

 private:
  ModelConfig cfg_;
  ModelParams params_;
  Vocabulary vocab_;
  EmbeddingTable embeddings_;
};

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(std::string_view text);

}  // namespace extsum
