#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "kirag/aligner.hpp"
#include "kirag/backends.hpp"
#include "kirag/constructor.hpp"
#include "kirag/corpus.hpp"
#include "kirag/index.hpp"
#include "kirag/prompts.hpp"
#include "kirag/types.hpp"

namespace kirag {

struct PipelineConfig {
    int max_iterations = 5;          // L
    int docs_per_iteration = 10;     // K0
    int candidates_per_iteration = 20;  // N
    int final_k = 3;                 // K
    Granularity granularity = Granularity::Triple;
    bool online_extraction = false;  // extract triples for KG misses during retrieval
    std::string unit_label = "context";  // query label in document/sentence granularity
    int doc_unit_char_budget = 500;

    void validate() const;
};

/// Wiring for one run. All stores are shared immutable state across
/// concurrent questions, except the KG corpus which may grow under online
/// extraction (guarded by kg_mutex; extraction calls serialize).
struct PipelineStores {
    const DocumentStore* documents = nullptr;
    KgCorpus* kg = nullptr;
    const DenseIndex* index = nullptr;
    const AlignerModel* aligner = nullptr;
    ChatBackend* constructor_chat = nullptr;
    ChatBackend* reader_chat = nullptr;     // required only for answer paths
    ChatBackend* extractor_chat = nullptr;  // required only for online extraction
    const PromptSet* prompts = nullptr;
    std::shared_ptr<std::mutex> kg_mutex = std::make_shared<std::mutex>();

    void validate() const;
};

struct IterationRecord {
    int iteration = 0;  // 1-based
    std::string query;
    std::vector<SearchHit> searched;
    size_t unit_pool_size = 0;
    size_t extracted_docs = 0;
    size_t skipped_docs = 0;
    std::vector<ScoredUnit> candidates;  // top-N for this iteration
    std::string outcome;                 // extended | terminated | exhausted
    std::string via;                     // generated | fallback | ""
    std::string appended_unit;
};

struct RetrievalTrace {
    std::string question;
    std::vector<IterationRecord> iterations;
    ReasoningChain chain;
    std::vector<ScoredUnit> accumulated;  // T_q: all per-iteration top-N, in order
    std::vector<SearchHit> first_search;  // iteration-1 hits, the empty-T_q fallback
    bool used_search_fallback = false;
    std::string config_fingerprint;
};

/// The iterative loop: format query, search K0 docs, gather units, score,
/// select top-N, extend the chain; stops on termination, exhaustion, or L
/// iterations. Honors config.granularity.
RetrievalTrace retrieve(const std::string& question, const PipelineConfig& config,
                        const PipelineStores& stores);

/// Same loop with the unit kind named explicitly; triple granularity matches
/// retrieve exactly.
RetrievalTrace run_granularity_variant(const std::string& question, const PipelineConfig& config,
                                       const PipelineStores& stores);

/// Groups T_q by source document, scores each document by its best unit, and
/// sorts (score desc, earlier best iteration, doc_id asc), truncated to k.
/// Empty T_q yields an empty list.
std::vector<RankedDocument> rank_documents(const RetrievalTrace& trace, int k);

/// rank_documents, falling back to the first-iteration search results when
/// T_q is empty (the trace flags this).
std::vector<RankedDocument> ranked_with_fallback(RetrievalTrace& trace, int k);

/// Baseline path: one dense search with the plain question, no iteration.
std::vector<RankedDocument> single_shot_rank(const std::string& question, int k,
                                             const PipelineStores& stores);

/// One reader call; context renders the documents as "Title: ...\nText: ..."
/// blocks in rank order, blank-line separated.
std::string answer(const std::string& question, const std::vector<RankedDocument>& ranked,
                   const DocumentStore& documents, ChatBackend& reader, const PromptSet& prompts);

/// Rule-based splitter: sentence boundary at '.', '?' or '!' followed by
/// whitespace and an uppercase letter.
std::vector<std::string> split_sentences(const std::string& text);

nlohmann::json trace_to_json(const RetrievalTrace& trace);

/// The wire payload served by both the CLI and the HTTP service:
/// {"documents": [{doc_id, score, best_triple}], "chain": [...], "iterations": n}.
nlohmann::json retrieval_payload(RetrievalTrace& trace, int k);

}  // namespace kirag
