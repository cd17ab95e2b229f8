#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kirag/util.hpp"

namespace kirag {

/// A corpus unit: retrievable and decomposable into knowledge triples.
struct Document {
    std::string doc_id;
    std::string title;
    std::string text;
};

/// <head; relation; tail> fact grounded in a source document. Fields are
/// nonempty after trimming and never contain ';', '<' or '>'.
struct KnowledgeTriple {
    std::string head;
    std::string relation;
    std::string tail;
    std::string source_doc_id;

    /// Wire form, exactly "<head; relation; tail>".
    std::string wire() const { return "<" + head + "; " + relation + "; " + tail + ">"; }

    /// Case-folded, whitespace-collapsed wire form; the identity key used for
    /// candidate matching, duplicate filtering and positive/negative checks.
    std::string key() const { return normalized_key(wire()); }

    bool operator==(const KnowledgeTriple& other) const {
        return head == other.head && relation == other.relation && tail == other.tail &&
               source_doc_id == other.source_doc_id;
    }
};

inline bool valid_triple_field(const std::string& field) {
    if (trim(field).empty()) return false;
    for (char c : field) {
        if (c == ';' || c == '<' || c == '>') return false;
    }
    return true;
}

inline bool valid_triple(const KnowledgeTriple& t) {
    return valid_triple_field(t.head) && valid_triple_field(t.relation) && valid_triple_field(t.tail);
}

/// Atomic retrieval/reasoning unit for the iterative loop.
enum class Granularity { Triple, Document, Sentence };

/// One step of a reasoning chain. In triple granularity `triple` is set and
/// `text` is its wire form; in document/sentence granularity `text` is the
/// unit itself.
struct ChainUnit {
    std::string text;
    std::string source_doc_id;
    std::optional<KnowledgeTriple> triple;

    std::string key() const { return normalized_key(text); }

    static ChainUnit from_triple(const KnowledgeTriple& t) {
        return ChainUnit{t.wire(), t.source_doc_id, t};
    }
};

/// Ordered unit sequence built across iterations; terminal once an answer is
/// set.
struct ReasoningChain {
    std::vector<ChainUnit> steps;
    std::optional<std::string> answer;

    bool terminal() const { return answer.has_value(); }
    bool empty() const { return steps.empty(); }
    size_t size() const { return steps.size(); }

    bool contains(const std::string& unit_key) const {
        for (const auto& s : steps) {
            if (s.key() == unit_key) return true;
        }
        return false;
    }

    std::vector<KnowledgeTriple> triples() const {
        std::vector<KnowledgeTriple> out;
        out.reserve(steps.size());
        for (const auto& s : steps) {
            if (s.triple) out.push_back(*s.triple);
        }
        return out;
    }

    static ReasoningChain from_triples(const std::vector<KnowledgeTriple>& ts) {
        ReasoningChain chain;
        chain.steps.reserve(ts.size());
        for (const auto& t : ts) chain.steps.push_back(ChainUnit::from_triple(t));
        return chain;
    }
};

/// Aligner-scored triple; score is the inner product of two unit vectors.
struct ScoredTriple {
    KnowledgeTriple triple;
    double score = 0.0;
    int iteration = 0;
};

/// Aligner-scored retrieval unit (triple, document, or sentence).
struct ScoredUnit {
    ChainUnit unit;
    double score = 0.0;
    int iteration = 0;

    static ScoredUnit from_scored_triple(const ScoredTriple& st) {
        return ScoredUnit{ChainUnit::from_triple(st.triple), st.score, st.iteration};
    }
};

inline std::vector<ScoredUnit> to_units(const std::vector<ScoredTriple>& scored) {
    std::vector<ScoredUnit> out;
    out.reserve(scored.size());
    for (const auto& st : scored) out.push_back(ScoredUnit::from_scored_triple(st));
    return out;
}

/// Final document ranking entry: score of the best unit derived from the
/// document, plus the iteration that unit was scored at.
struct RankedDocument {
    std::string doc_id;
    double score = 0.0;
    std::string best_unit_text;
    int best_iteration = 0;
};

/// One contrastive training example: question, partial chain, the correct
/// next triple and sampled negatives.
struct TrainingExample {
    std::string question;
    std::vector<KnowledgeTriple> partial_chain;
    KnowledgeTriple positive;
    std::vector<KnowledgeTriple> negatives;
};

}  // namespace kirag
