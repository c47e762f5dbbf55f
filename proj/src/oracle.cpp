#include "extsum/oracle.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>


namespace extsum {

namespace {

// Incremental ROUGE-1 against a fixed reference. Tokens are interned per
// document; ids >= reference vocabulary never overlap.
class UnigramScorer {
 public:
  explicit UnigramScorer(const std::vector<std::string>& reference) {
    for (const auto& t : reference) {
      auto [it, inserted] = ids_.emplace(t, ref_counts_.size());
      if (inserted) ref_counts_.push_back(0);
      ++ref_counts_[it->second];
    }
    ref_total_ = reference.size();
    hyp_counts_.assign(ref_counts_.size(), 0);
  }

  // Overlap contribution of a sentence, as (token id, count) pairs restricted
  // to reference tokens, plus its total token count.
  struct Bag {
    std::vector<std::pair<std::size_t, std::size_t>> shared;
    std::size_t total = 0;
  };

  Bag bag(const Sentence& s) const {
    std::unordered_map<std::size_t, std::size_t> counts;
    for (const auto& t : s.tokens) {
      if (auto it = ids_.find(t); it != ids_.end()) ++counts[it->second];
    }
    Bag b;
    b.shared.assign(counts.begin(), counts.end());
    std::sort(b.shared.begin(), b.shared.end());
    b.total = s.tokens.size();
    return b;
  }

  // F1 = 2*overlap / (|hyp| + |ref|), kept as an exact fraction so that
  // mathematically tied candidates compare equal.
  struct Fraction {
    std::size_t num = 0;
    std::size_t den = 1;
    bool operator>(const Fraction& o) const { return num * o.den > o.num * den; }
  };

  Fraction score_with(const Bag& b) const {
    std::size_t overlap = overlap_;
    for (auto [id, c] : b.shared) {
      const std::size_t before = std::min(hyp_counts_[id], ref_counts_[id]);
      const std::size_t after = std::min(hyp_counts_[id] + c, ref_counts_[id]);
      overlap += after - before;
    }
    if (overlap == 0) return {};
    return {2 * overlap, hyp_total_ + b.total + ref_total_};
  }

  void add(const Bag& b) {
    for (auto [id, c] : b.shared) {
      const std::size_t before = std::min(hyp_counts_[id], ref_counts_[id]);
      hyp_counts_[id] += c;
      overlap_ += std::min(hyp_counts_[id], ref_counts_[id]) - before;
    }
    hyp_total_ += b.total;
  }

 private:
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::size_t> ref_counts_;
  std::vector<std::size_t> hyp_counts_;
  std::size_t ref_total_ = 0;
  std::size_t hyp_total_ = 0;
  std::size_t overlap_ = 0;
};

}  // namespace

LabeledDocument generate_labels(const Document& doc, std::size_t length_limit) {
  if (length_limit == 0) throw std::invalid_argument("generate_labels: length limit must be >= 1");
  LabeledDocument out;
  out.document = doc;
  out.labels.assign(doc.sentences.size(), 0);

  UnigramScorer scorer(doc.abstract_tokens());
  std::vector<UnigramScorer::Bag> bags;
  bags.reserve(doc.sentences.size());
  for (const auto& s : doc.sentences) bags.push_back(scorer.bag(s));

  UnigramScorer::Fraction highest;
  std::size_t words = 0;
  while (words <= length_limit) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      if (out.labels[i]) continue;
      const auto f = scorer.score_with(bags[i]);
      if (f > highest) {
        highest = f;
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (best < 0) break;
    const auto pick = static_cast<std::size_t>(best);
    out.labels[pick] = 1;
    out.picked_order.push_back(pick);
    scorer.add(bags[pick]);
    words += doc.sentences[pick].word_count;
  }
  return out;
}

Document attach_labels(const LabeledDocument& labeled) {
  Document d = labeled.document;
  d.labels = labeled.labels;
  d.picked_order = labeled.picked_order;
  return d;
}

LabeledDocument require_labels(const Document& doc) {
  if (!doc.labels) {
    throw std::runtime_error("document '" + doc.id +
                             "' has no oracle labels; run `extsum label` on the corpus first");
  }
  LabeledDocument out;
  out.document = doc;
  out.labels = *doc.labels;
  out.picked_order = doc.picked_order;
  return out;
}

std::vector<std::string> lead_summary(const Document& doc, std::size_t length_limit) {
  if (length_limit == 0) throw std::invalid_argument("lead_summary: length limit must be >= 1");
  std::vector<std::string> out;
  for (const auto& s : doc.sentences) {
    for (const auto& t : s.tokens) {
      if (out.size() == length_limit) return out;
      out.push_back(t);
    }
  }
  return out;
}

std::vector<std::size_t> oracle_summary(const LabeledDocument& labeled) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labeled.labels.size(); ++i) {
    if (labeled.labels[i]) out.push_back(i);
  }
  return out;
}

}  // namespace extsum
