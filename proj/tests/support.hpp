#pragma once

// Shared helpers for the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "extsum/corpus.hpp"
#include "extsum/model.hpp"
#include "extsum/oracle.hpp"
#include "extsum/tensor.hpp"
#include "json.hpp"

namespace extsum::testing {

inline std::filesystem::path data_dir() { return EXTSUM_TEST_DATA_DIR; }

// A fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("extsum_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Builds a document from raw sentence strings grouped by section.
inline Document make_document(const std::vector<std::vector<std::string>>& sections,
                              const std::vector<std::string>& abstract, const std::string& id = "doc") {
  nlohmann::json j;
  j["id"] = id;
  j["sections"] = sections;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < sections.size(); ++k) names.push_back("s" + std::to_string(k));
  j["section_names"] = names;
  j["abstract"] = abstract;
  auto d = parse_document(j.dump(), 1);
  if (!d) throw std::runtime_error("make_document: document was skipped");
  return *d;
}

// Document whose sentences are single space-joined token strings; every
// sentence has exactly its listed tokens.
inline Document token_document(const std::vector<std::vector<std::vector<std::string>>>& sections,
                               const std::vector<std::string>& abstract_tokens, const std::string& id = "doc") {
  std::vector<std::vector<std::string>> raw;
  for (const auto& sec : sections) {
    auto& out = raw.emplace_back();
    for (const auto& sent : sec) {
      std::string s;
      for (const auto& t : sent) s += (s.empty() ? "" : " ") + t;
      out.push_back(s);
    }
  }
  std::string abs;
  for (const auto& t : abstract_tokens) abs += (abs.empty() ? "" : " ") + t;
  return make_document(raw, {abs}, id);
}

// Sentence-count layout -> document of placeholder sentences "w<i> x".
inline Document layout_document(const std::vector<std::size_t>& section_sizes, const std::string& id = "layout") {
  std::vector<std::vector<std::string>> sections;
  std::size_t i = 0;
  for (auto n : section_sizes) {
    auto& sec = sections.emplace_back();
    for (std::size_t k = 0; k < n; ++k, ++i) sec.push_back("w" + std::to_string(i) + " x");
  }
  return make_document(sections, {"w0"}, id);
}

inline std::vector<Tensor> random_inputs(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Real> v(dim);
    for (auto& x : v) x = static_cast<Real>(rng.uniform(-1.0, 1.0));
    out.push_back(Tensor::vector(std::move(v)));
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
};

// Central finite differences of `loss` against the analytic gradients already
// accumulated in `params`. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const NamedTensors& params, const std::function<double()>& loss, double step = 1e-5,
                                 double floor = 1e-6) {
  GradCheck out;
  for (const auto& [name, t] : params) {
    Tensor p = t;
    auto values = p.values();
    auto grads = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = saved + static_cast<Real>(step);
      const double up = loss();
      values[i] = saved - static_cast<Real>(step);
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

inline EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  EmbeddingTable t;
  t.rows = vocab.size();
  t.dim = dim;
  t.values.assign(t.rows * dim, Real(0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = 1; r < t.rows; ++r) {
    for (std::size_t k = 0; k < dim; ++k) t.values[r * dim + k] = static_cast<Real>(normal(rng));
  }
  t.coverage = 1.0;
  return t;
}

// Synthetic sectioned corpus with a planted extractive signal.
//
// Every sentence has exactly `words_per_sentence` words. Two "key" sentences
// per document mix words from a signal pool with fillers; the abstract holds
// the key sentences' signal words (plus words absent from the document).
// Other sentences use fillers only, so the greedy oracle at limit
// `oracle_limit()` picks exactly the two key sentences.
struct SyntheticCorpus {
  std::vector<Document> documents;
  std::vector<std::string> words;  // every word that may appear

  static constexpr std::size_t words_per_sentence = 5;
  static std::size_t oracle_limit() { return words_per_sentence + 3; }
};

inline SyntheticCorpus make_synthetic_corpus(std::size_t n_docs, std::uint64_t seed, const std::string& prefix = "syn") {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  SyntheticCorpus corpus;
  std::vector<std::string> signal, filler, extra;
  for (int i = 0; i < 24; ++i) signal.push_back("sig" + std::to_string(i));
  for (int i = 0; i < 48; ++i) filler.push_back("fill" + std::to_string(i));
  for (int i = 0; i < 8; ++i) extra.push_back("abs" + std::to_string(i));
  corpus.words = signal;
  corpus.words.insert(corpus.words.end(), filler.begin(), filler.end());
  corpus.words.insert(corpus.words.end(), extra.begin(), extra.end());

  for (std::size_t d = 0; d < n_docs; ++d) {
    const std::size_t n_sections = 2 + pick(2);
    std::vector<std::size_t> sizes;
    std::size_t n = 0;
    for (std::size_t s = 0; s < n_sections; ++s) {
      sizes.push_back(2 + pick(3));
      n += sizes.back();
    }
    std::size_t key_a = pick(n), key_b = pick(n);
    while (key_b == key_a) key_b = pick(n);

    std::vector<std::vector<std::string>> sentences(n);
    std::vector<std::string> abstract;
    for (std::size_t i = 0; i < n; ++i) {
      const bool key = i == key_a || i == key_b;
      for (std::size_t w = 0; w < SyntheticCorpus::words_per_sentence; ++w) {
        if (key && w < 3) {
          std::string tok = signal[pick(signal.size())];
          abstract.push_back(tok);
          sentences[i].push_back(tok);
        } else {
          sentences[i].push_back(filler[pick(filler.size())]);
        }
      }
    }
    abstract.push_back(extra[pick(extra.size())]);
    abstract.push_back(extra[pick(extra.size())]);

    std::vector<std::vector<std::vector<std::string>>> grouped;
    std::size_t i = 0;
    for (auto size : sizes) {
      auto& sec = grouped.emplace_back();
      for (std::size_t k = 0; k < size; ++k) sec.push_back(sentences[i++]);
    }
    corpus.documents.push_back(token_document(grouped, abstract, prefix + std::to_string(d)));
  }
  return corpus;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& d : docs) out << serialize_document(d) << '\n';
}

inline void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& words, std::size_t dim,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::ofstream out(path, std::ios::trunc);
  out.precision(9);
  for (const auto& w : words) {
    out << w;
    for (std::size_t k = 0; k < dim; ++k) out << ' ' << normal(rng);
    out << '\n';
  }
}

}  // namespace extsum::testing
