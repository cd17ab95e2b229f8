#pragma once

#include <string>
#include <vector>

namespace kirag {

/// Gold-coverage fraction |gold intersect top-k| / |gold|.
double recall_at_k(const std::vector<std::string>& ranked_doc_ids,
                   const std::vector<std::string>& gold_doc_ids, int k);

/// Lowercase, strip punctuation, drop article tokens (a, an, the), collapse
/// whitespace. Idempotent.
std::string normalize_answer(const std::string& text);

/// 1 iff the normalized prediction equals some normalized gold answer.
int em(const std::string& prediction, const std::vector<std::string>& gold_answers);

/// Token-multiset F1 on normalized texts, maximum over gold answers.
/// Both sides empty -> 1; exactly one empty -> 0.
double f1(const std::string& prediction, const std::vector<std::string>& gold_answers);

}  // namespace kirag
