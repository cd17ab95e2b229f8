#pragma once

#include <string>
#include <vector>

#include "kirag/backends.hpp"
#include "kirag/types.hpp"

namespace kirag {

/// Per-iteration retrieval query. Empty chain renders the question verbatim;
/// otherwise "{question}. {label}: {u1}, {u2}, ..." with units in chain order
/// (wire-form triples in triple granularity). Default label is
/// "knowledge triples"; granularity variants swap in e.g. "context".
std::string format_iterative_query(const std::string& question, const ReasoningChain& chain,
                                   const std::string& label = "knowledge triples");

struct SearchHit {
    std::string doc_id;
    double score = 0.0;
};

/// Brute-force inner-product index over unit-norm document embeddings.
/// Immutable after build; concurrent searches are safe.
class DenseIndex {
public:
    /// Embeds each document as "{title}\n{text}" (plus the configured passage
    /// prefix) and stores unit-norm rows. Duplicate doc_ids are an error.
    static DenseIndex build(const std::vector<Document>& docs, EmbeddingBackend& backend,
                            const PrefixConfig& prefixes = {});

    /// Top-min(k, size) hits, score descending, ties by ascending doc_id.
    std::vector<SearchHit> search(const std::string& query_text, int k,
                                  EmbeddingBackend& backend) const;

    size_t size() const { return doc_ids_.size(); }
    int dim() const { return dim_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::vector<float>& matrix() const { return matrix_; }
    const std::string& backend_name() const { return backend_name_; }
    const PrefixConfig& prefixes() const { return prefixes_; }

    /// Binary sidecar: magic + JSON header + row-major float32 data
    /// (little-endian, format version 1).
    void save(const std::string& path) const;
    static DenseIndex load(const std::string& path);

private:
    std::vector<std::string> doc_ids_;
    std::vector<float> matrix_;  // row-major, doc_ids_.size() x dim_
    int dim_ = 0;
    std::string backend_name_;
    PrefixConfig prefixes_;
};

}  // namespace kirag
