#include "kirag/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "kirag/util.hpp"

namespace kirag {

double recall_at_k(const std::vector<std::string>& ranked_doc_ids,
                   const std::vector<std::string>& gold_doc_ids, int k) {
    if (k < 1) throw std::invalid_argument("recall_at_k requires k >= 1");
    if (gold_doc_ids.empty()) throw std::invalid_argument("recall_at_k requires nonempty gold");
    std::unordered_set<std::string> top;
    for (size_t i = 0; i < ranked_doc_ids.size() && i < static_cast<size_t>(k); ++i)
        top.insert(ranked_doc_ids[i]);
    std::unordered_set<std::string> gold(gold_doc_ids.begin(), gold_doc_ids.end());
    size_t hit = 0;
    for (const auto& g : gold)
        if (top.count(g)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(gold.size());
}

std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        lowered.push_back(static_cast<char>(std::tolower(uc)));
    }
    std::string out;
    out.reserve(lowered.size());
    for (const auto& tok : split_whitespace(lowered)) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

int em(const std::string& prediction, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) throw std::invalid_argument("em requires nonempty gold answers");
    const std::string pred = normalize_answer(prediction);
    for (const auto& g : gold_answers)
        if (pred == normalize_answer(g)) return 1;
    return 0;
}

namespace {

double f1_single(const std::string& norm_pred, const std::string& norm_gold) {
    auto pred_tokens = split_whitespace(norm_pred);
    auto gold_tokens = split_whitespace(norm_gold);
    if (pred_tokens.empty() && gold_tokens.empty()) return 1.0;
    if (pred_tokens.empty() || gold_tokens.empty()) return 0.0;

    std::unordered_map<std::string, int> gold_counts;
    for (const auto& t : gold_tokens) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : pred_tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / static_cast<double>(pred_tokens.size());
    double recall = static_cast<double>(overlap) / static_cast<double>(gold_tokens.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double f1(const std::string& prediction, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) throw std::invalid_argument("f1 requires nonempty gold answers");
    const std::string pred = normalize_answer(prediction);
    double best = 0.0;
    for (const auto& g : gold_answers) best = std::max(best, f1_single(pred, normalize_answer(g)));
    return best;
}

}  // namespace kirag
