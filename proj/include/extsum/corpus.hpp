#pragma once

// Section-structured document corpora, tokenization, vocabularies and
// pretrained embedding tables.
//
// Corpus files are UTF-8 JSON lines. Each line holds one document:
//
//   {"id": "d1",
//    "sections": [["First sentence.", "Second."], ["Third."]],
//    "section_names": ["introduction", "method"],
//    "abstract": ["Reference sentence one.", "Reference two."],
//    "labels": [1, 0, 0],          (optional, written by `extsum label`)
//    "picked_order": [0]}          (optional)
//
// Embedding files are text, one `token v1 ... vd` entry per line.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "extsum/tensor.hpp"

namespace extsum {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sentence {
  std::string text;                 // raw sentence as it appeared in the input
  std::vector<std::string> tokens;  // lowercased, punctuation-trimmed
  std::size_t word_count = 0;       // whitespace tokens before filtering
};

// Inclusive sentence index range [start, end] of one section.
struct SectionSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string name;

  std::size_t length() const { return end - start + 1; }
  bool contains(std::size_t i) const { return i >= start && i <= end; }
};

struct Document {
  std::string id;
  std::vector<SectionSpan> sections;
  std::vector<Sentence> sentences;
  std::vector<Sentence> abstract;
  std::optional<std::vector<int>> labels;
  std::vector<std::size_t> picked_order;

  std::size_t total_words() const;
  std::vector<std::string> abstract_tokens() const;
  // Index of the section containing sentence i.
  std::size_t section_of(std::size_t sentence) const;
};

// Throws FormatError if the section spans are not a contiguous, non-empty
// cover of the sentences, or labels do not match the sentence count.
void validate_document(const Document& doc);

// Lowercases, splits on whitespace and trims leading/trailing characters that
// are not ASCII alphanumerics. Bytes >= 0x80 (UTF-8 sequences) are kept.
Sentence tokenize(std::string_view raw_sentence);

struct LoadOptions {
  std::size_t max_sentences = 500;  // truncate longer documents from the end
  bool require_abstract = true;     // false: `abstract` may be absent or empty
};

struct LoadedCorpus {
  std::vector<Document> documents;
  std::size_t skipped = 0;  // documents with no sentences or no abstract
};

// Parses one JSON line. Returns nullopt for documents that must be skipped
// (no sentences, or no abstract when one is required).
// `line_number` is only used in error messages.
std::optional<Document> parse_document(std::string_view line, std::size_t line_number,
                                       const LoadOptions& options = {});
LoadedCorpus read_corpus(std::istream& in, const LoadOptions& options = {});
LoadedCorpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});

// Serializes back to the line format (no trailing newline). Labels and pick
// order are written when present.
std::string serialize_document(const Document& doc);

class Vocabulary {
 public:
  static constexpr std::size_t kUnkId = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // Builds from an id-ordered token list whose first entry is the UNK token.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Top cap-1 sentence tokens by frequency (ties: lexicographic), plus UNK.
Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t cap = 50000);

struct EmbeddingTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<Real> values;  // rows x dim, row-major
  double coverage = 0.0;     // fraction of non-UNK vocabulary rows found in the file

  std::span<const Real> row(std::size_t id) const { return {values.data() + id * dim, dim}; }
};

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim);
EmbeddingTable read_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim);

}  // namespace extsum
