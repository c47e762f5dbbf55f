#include "extsum/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace extsum {

using nlohmann::json;

namespace {

bool is_word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

std::string at_line(std::size_t line_number, const std::string& msg) {
  return "line " + std::to_string(line_number) + ": " + msg;
}

std::vector<std::string> string_list(const json& j, const char* field, std::size_t line_number) {
  if (!j.is_array()) throw FormatError(at_line(line_number, std::string("'") + field + "' must be a list"));
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_string()) {
      throw FormatError(at_line(line_number, std::string("'") + field + "' must contain only strings"));
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

std::size_t Document::total_words() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.word_count;
  return n;
}

std::vector<std::string> Document::abstract_tokens() const {
  std::vector<std::string> out;
  for (const auto& s : abstract) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::size_t Document::section_of(std::size_t sentence) const {
  auto it = std::upper_bound(sections.begin(), sections.end(), sentence,
                             [](std::size_t i, const SectionSpan& s) { return i < s.start; });
  if (it == sections.begin() || !std::prev(it)->contains(sentence)) {
    throw std::out_of_range("sentence " + std::to_string(sentence) + " is not covered by any section");
  }
  return static_cast<std::size_t>(std::prev(it) - sections.begin());
}

void validate_document(const Document& doc) {
  const std::string where = "document '" + doc.id + "': ";
  if (doc.sentences.empty()) throw FormatError(where + "no sentences");
  std::size_t next = 0;
  for (const auto& s : doc.sections) {
    if (s.start != next || s.end < s.start) throw FormatError(where + "sections are not a contiguous cover");
    next = s.end + 1;
  }
  if (next != doc.sentences.size()) throw FormatError(where + "sections do not cover every sentence");
  if (doc.labels && doc.labels->size() != doc.sentences.size()) {
    throw FormatError(where + std::to_string(doc.labels->size()) + " labels for " +
                      std::to_string(doc.sentences.size()) + " sentences");
  }
}

Sentence tokenize(std::string_view raw) {
  Sentence s;
  s.text = std::string(raw);
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (i == raw.size()) break;
    std::size_t j = i;
    while (j < raw.size() && !std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
    ++s.word_count;
    std::size_t b = i, e = j;
    while (b < e && !is_word_char(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && !is_word_char(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (b < e) {
      std::string tok(raw.substr(b, e - b));
      for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      s.tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return s;
}

std::optional<Document> parse_document(std::string_view line, std::size_t line_number,
                                       const LoadOptions& options) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(at_line(line_number, std::string("malformed JSON: ") + e.what()));
  }
  if (!j.is_object()) throw FormatError(at_line(line_number, "expected a JSON object"));
  for (const char* field : {"id", "sections", "section_names", "abstract"}) {
    if (!j.contains(field) && (options.require_abstract || std::string_view(field) != "abstract")) {
      throw FormatError(at_line(line_number, std::string("missing field '") + field + "'"));
    }
  }
  if (!j["id"].is_string()) throw FormatError(at_line(line_number, "'id' must be a string"));
  const auto& sections = j["sections"];
  if (!sections.is_array()) throw FormatError(at_line(line_number, "'sections' must be a list"));
  const auto names = string_list(j["section_names"], "section_names", line_number);
  if (names.size() != sections.size()) {
    throw FormatError(at_line(line_number, "section_names has " + std::to_string(names.size()) +
                                               " entries but sections has " + std::to_string(sections.size())));
  }

  Document doc;
  doc.id = j["id"].get<std::string>();
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const std::size_t start = doc.sentences.size();
    for (const auto& raw : string_list(sections[k], "sections", line_number)) {
      if (doc.sentences.size() == options.max_sentences) break;
      Sentence s = tokenize(raw);
      if (s.word_count == 0) continue;
      doc.sentences.push_back(std::move(s));
    }
    if (doc.sentences.size() > start) doc.sections.push_back({start, doc.sentences.size() - 1, names[k]});
  }
  if (j.contains("abstract")) {
    for (const auto& raw : string_list(j["abstract"], "abstract", line_number)) {
      Sentence s = tokenize(raw);
      if (s.word_count > 0) doc.abstract.push_back(std::move(s));
    }
  }
  if (doc.sentences.empty() || (options.require_abstract && doc.abstract.empty())) return std::nullopt;

  if (j.contains("labels")) {
    const auto& labels = j["labels"];
    if (!labels.is_array()) throw FormatError(at_line(line_number, "'labels' must be a list"));
    std::vector<int> y;
    for (const auto& v : labels) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        throw FormatError(at_line(line_number, "'labels' must contain only 0 or 1"));
      }
      y.push_back(v.get<int>());
    }
    doc.labels = std::move(y);
  }
  if (j.contains("picked_order")) {
    for (const auto& v : j["picked_order"]) {
      if (!v.is_number_unsigned()) throw FormatError(at_line(line_number, "'picked_order' must hold indices"));
      doc.picked_order.push_back(v.get<std::size_t>());
    }
  }
  try {
    validate_document(doc);
  } catch (const FormatError& e) {
    throw FormatError(at_line(line_number, e.what()));
  }
  return doc;
}

LoadedCorpus read_corpus(std::istream& in, const LoadOptions& options) {
  LoadedCorpus out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (auto doc = parse_document(line, line_number, options)) {
      out.documents.push_back(std::move(*doc));
    } else {
      ++out.skipped;
    }
  }
  return out;
}

LoadedCorpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  try {
    return read_corpus(in, options);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string serialize_document(const Document& doc) {
  json j;
  j["id"] = doc.id;
  json sections = json::array();
  json names = json::array();
  for (const auto& span : doc.sections) {
    json texts = json::array();
    for (std::size_t i = span.start; i <= span.end; ++i) texts.push_back(doc.sentences[i].text);
    sections.push_back(std::move(texts));
    names.push_back(span.name);
  }
  j["sections"] = std::move(sections);
  j["section_names"] = std::move(names);
  json abstract = json::array();
  for (const auto& s : doc.abstract) abstract.push_back(s.text);
  j["abstract"] = std::move(abstract);
  if (doc.labels) {
    j["labels"] = *doc.labels;
    j["picked_order"] = doc.picked_order;
  }
  return j.dump();
}

// ---- Vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_[0] != kUnkToken) {
    throw std::invalid_argument("vocabulary must start with the UNK token");
  }
  for (std::size_t i = 1; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t cap) {
  if (cap == 0) throw std::invalid_argument("vocabulary cap must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) {
      for (const auto& t : s.tokens) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens{std::string(Vocabulary::kUnkToken)};
  for (std::size_t i = 0; i < ranked.size() && tokens.size() < cap; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(std::move(tokens));
}

// ---- Embeddings ------------------------------------------------------------

EmbeddingTable read_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim) {
  EmbeddingTable table;
  table.rows = vocab.size();
  table.dim = dim;
  table.values.assign(table.rows * dim, Real(0));
  std::vector<bool> filled(vocab.size(), false);
  std::size_t found = 0;

  std::string line;
  std::vector<double> row;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    row.clear();
    std::string num;
    while (fields >> num) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec != std::errc() || ptr != num.data() + num.size()) {
        throw FormatError("embeddings: bad value '" + num + "' for token '" + token + "'");
      }
      row.push_back(v);
    }
    if (row.size() != dim) {
      throw FormatError("embeddings: token '" + token + "' has " + std::to_string(row.size()) +
                        " values, expected " + std::to_string(dim));
    }
    const std::size_t id = vocab.id(token);
    if (id == Vocabulary::kUnkId || filled[id]) continue;
    filled[id] = true;
    ++found;
    std::copy(row.begin(), row.end(), table.values.begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  table.coverage = vocab.size() > 1 ? static_cast<double>(found) / static_cast<double>(vocab.size() - 1) : 0.0;
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings " + path.string());
  return read_embeddings(in, vocab, dim);
}

}  // namespace extsum
