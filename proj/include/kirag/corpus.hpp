#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "kirag/backends.hpp"
#include "kirag/prompts.hpp"
#include "kirag/types.hpp"

namespace kirag {

// ---------------------------------------------------------------------------
// Document store
// ---------------------------------------------------------------------------

struct IngestStats {
    size_t count = 0;
    size_t duplicates = 0;
};

class DocumentStore {
public:
    /// Duplicate doc_ids are a hard error unless keep_first is set, in which
    /// case later occurrences are dropped and counted.
    static DocumentStore from_documents(std::vector<Document> docs, bool keep_first = false,
                                        IngestStats* stats = nullptr);

    /// Reads line-delimited JSON records {"doc_id", "title", "text"}.
    /// Malformed lines raise an error naming the 1-based line number.
    static DocumentStore load_jsonl(const std::string& path, bool keep_first = false,
                                    IngestStats* stats = nullptr);

    void save_jsonl(const std::string& path) const;

    const std::vector<Document>& docs() const { return docs_; }
    size_t size() const { return docs_.size(); }
    bool contains(const std::string& doc_id) const { return by_id_.count(doc_id) > 0; }
    const Document* find(const std::string& doc_id) const;
    const Document& at(const std::string& doc_id) const;

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, size_t> by_id_;
};

// ---------------------------------------------------------------------------
// KG corpus: doc_id -> extracted triples + extraction metadata
// ---------------------------------------------------------------------------

struct KgEntry {
    std::vector<KnowledgeTriple> triples;
    std::string model;
    std::string prompt_hash;
};

class KgCorpus {
public:
    /// Stores an entry; every triple's source_doc_id must equal doc_id.
    void put(const std::string& doc_id, KgEntry entry);

    bool contains(const std::string& doc_id) const { return entries_.count(doc_id) > 0; }
    const KgEntry* find(const std::string& doc_id) const;

    /// Total lookup: documents without an entry yield the empty list.
    const std::vector<KnowledgeTriple>& triples_for(const std::string& doc_id) const;

    size_t size() const { return entries_.size(); }
    size_t triple_count() const;
    const std::map<std::string, KgEntry>& entries() const { return entries_; }

    /// Line-delimited JSON, one document entry per line, sorted by doc_id.
    void save(const std::string& path) const;
    static KgCorpus load(const std::string& path);

    static std::string entry_to_line(const std::string& doc_id, const KgEntry& entry);

private:
    std::map<std::string, KgEntry> entries_;
};

// ---------------------------------------------------------------------------
// Triple parsing and extraction
// ---------------------------------------------------------------------------

struct ParsedTriples {
    std::vector<KnowledgeTriple> triples;
    size_t skipped = 0;
};

/// Extracts every <...; ...; ...> span (innermost '<' up to the next '>')
/// with exactly two ';' delimiters. Fields are whitespace-trimmed;
/// comma-aggregated tails stay one string; malformed spans are skipped and
/// counted. Order of appearance is preserved.
ParsedTriples parse_triples(const std::string& llm_output, const std::string& source_doc_id);

std::string build_extraction_prompt(const Document& doc, const PromptSet& prompts);

struct ExtractionResult {
    std::vector<KnowledgeTriple> triples;
    bool cache_hit = false;
    size_t skipped = 0;
};

/// One chat call per cache miss; hits are served from the KG entry keyed by
/// (doc_id, prompt hash). Zero-parse on nonempty output stores an empty entry
/// and warns. Backend errors carry the doc_id.
ExtractionResult extract_triples(const Document& doc, ChatBackend& chat, KgCorpus& kg,
                                 const PromptSet& prompts);

struct ExtractCorpusStats {
    size_t total = 0;
    size_t extracted = 0;
    size_t cached = 0;
    size_t malformed_spans = 0;
    size_t zero_triple_docs = 0;
};

/// Extraction driver over a document store with a bounded worker pool.
/// on_entry (optional, may be null) fires once per newly extracted document
/// under the internal lock, in completion order, for incremental persistence.
ExtractCorpusStats extract_corpus(const DocumentStore& store, ChatBackend& chat, KgCorpus& kg,
                                  const PromptSet& prompts, unsigned threads,
                                  const std::function<void(const std::string&, const KgEntry&)>& on_entry = {});

}  // namespace kirag
