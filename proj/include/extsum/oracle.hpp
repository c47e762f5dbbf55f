#pragma once

// Greedy ROUGE-1 oracle labels and the Lead / Oracle baselines.

#include <cstddef>
#include <string>
#include <vector>

#include "extsum/corpus.hpp"

namespace extsum {

struct LabeledDocument {
  Document document;
  std::vector<int> labels;                // one 0/1 per sentence
  std::vector<std::size_t> picked_order;  // greedy pick order, no duplicates
};

// Greedily adds the sentence that most increases the ROUGE-1 F-score of the
// accumulated extract against the abstract. A pick is accepted only if it
// beats the best score reached so far in the run; ties keep the lowest index.
// Picking continues while the extract holds at most `length_limit` words, so
// the final pick may cross the limit. Already-picked sentences are skipped.
LabeledDocument generate_labels(const Document& doc, std::size_t length_limit = 200);

// Writes labels and pick order into a copy of the document.
Document attach_labels(const LabeledDocument& labeled);

// Inverse of attach_labels. Throws if the document carries no labels.
LabeledDocument require_labels(const Document& doc);

// First min(length_limit, #tokens) document tokens.
std::vector<std::string> lead_summary(const Document& doc, std::size_t length_limit = 200);

// Labeled sentence indices in document order.
std::vector<std::size_t> oracle_summary(const LabeledDocument& labeled);

}  // namespace extsum
