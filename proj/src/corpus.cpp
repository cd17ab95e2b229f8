#include "kirag/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace kirag {

using nlohmann::json;

// ---------------------------------------------------------------------------
// DocumentStore
// ---------------------------------------------------------------------------

DocumentStore DocumentStore::from_documents(std::vector<Document> docs, bool keep_first,
                                            IngestStats* stats) {
    DocumentStore store;
    IngestStats local;
    for (auto& doc : docs) {
        if (doc.doc_id.empty()) throw std::runtime_error("document with empty doc_id");
        if (store.by_id_.count(doc.doc_id)) {
            if (!keep_first) throw std::runtime_error("duplicate doc_id: " + doc.doc_id);
            ++local.duplicates;
            continue;
        }
        store.by_id_.emplace(doc.doc_id, store.docs_.size());
        store.docs_.push_back(std::move(doc));
    }
    local.count = store.docs_.size();
    if (stats) *stats = local;
    return store;
}

DocumentStore DocumentStore::load_jsonl(const std::string& path, bool keep_first,
                                        IngestStats* stats) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<Document> docs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": invalid JSON record");
        if (!rec.contains("doc_id") || !rec["doc_id"].is_string() || rec["doc_id"].get<std::string>().empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing doc_id");
        Document doc;
        doc.doc_id = rec["doc_id"].get<std::string>();
        doc.title = rec.value("title", std::string());
        doc.text = rec.value("text", std::string());
        docs.push_back(std::move(doc));
    }
    try {
        return from_documents(std::move(docs), keep_first, stats);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void DocumentStore::save_jsonl(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& doc : docs_) {
        json rec = {{"doc_id", doc.doc_id}, {"title", doc.title}, {"text", doc.text}};
        out << rec.dump() << "\n";
    }
}

const Document* DocumentStore::find(const std::string& doc_id) const {
    auto it = by_id_.find(doc_id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document& DocumentStore::at(const std::string& doc_id) const {
    const Document* doc = find(doc_id);
    if (!doc) throw std::runtime_error("unknown doc_id: " + doc_id);
    return *doc;
}

// ---------------------------------------------------------------------------
// KgCorpus
// ---------------------------------------------------------------------------

void KgCorpus::put(const std::string& doc_id, KgEntry entry) {
    if (doc_id.empty()) throw std::runtime_error("KG entry with empty doc_id");
    for (const auto& t : entry.triples) {
        if (t.source_doc_id != doc_id)
            throw std::runtime_error("triple source_doc_id '" + t.source_doc_id +
                                     "' does not match KG key '" + doc_id + "'");
    }
    entries_[doc_id] = std::move(entry);
}

const KgEntry* KgCorpus::find(const std::string& doc_id) const {
    auto it = entries_.find(doc_id);
    return it == entries_.end() ? nullptr : &it->second;
}

const std::vector<KnowledgeTriple>& KgCorpus::triples_for(const std::string& doc_id) const {
    static const std::vector<KnowledgeTriple> kEmpty;
    const KgEntry* entry = find(doc_id);
    return entry ? entry->triples : kEmpty;
}

size_t KgCorpus::triple_count() const {
    size_t n = 0;
    for (const auto& [id, entry] : entries_) n += entry.triples.size();
    return n;
}

std::string KgCorpus::entry_to_line(const std::string& doc_id, const KgEntry& entry) {
    json triples = json::array();
    for (const auto& t : entry.triples)
        triples.push_back({{"head", t.head}, {"relation", t.relation}, {"tail", t.tail}});
    json rec = {{"doc_id", doc_id},
                {"triples", std::move(triples)},
                {"meta", {{"model", entry.model}, {"prompt_hash", entry.prompt_hash}}}};
    return rec.dump();
}

void KgCorpus::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write KG file: " + path);
    for (const auto& [doc_id, entry] : entries_) out << entry_to_line(doc_id, entry) << "\n";
}

KgCorpus KgCorpus::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open KG file: " + path);
    KgCorpus kg;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object())
            throw std::runtime_error(where + ": invalid JSON line");
        try {
            KgEntry entry;
            std::string doc_id = rec.at("doc_id").get<std::string>();
            for (const auto& t : rec.at("triples")) {
                KnowledgeTriple triple;
                triple.head = t.at("head").get<std::string>();
                triple.relation = t.at("relation").get<std::string>();
                triple.tail = t.at("tail").get<std::string>();
                triple.source_doc_id = doc_id;
                entry.triples.push_back(std::move(triple));
            }
            if (rec.contains("meta")) {
                entry.model = rec["meta"].value("model", std::string());
                entry.prompt_hash = rec["meta"].value("prompt_hash", std::string());
            }
            // Later lines win so an appended re-extraction supersedes.
            kg.put(doc_id, std::move(entry));
        } catch (const json::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    return kg;
}

// ---------------------------------------------------------------------------
// Parsing and extraction
// ---------------------------------------------------------------------------

ParsedTriples parse_triples(const std::string& llm_output, const std::string& source_doc_id) {
    ParsedTriples out;
    size_t pos = 0;
    while (true) {
        size_t close = llm_output.find('>', pos);
        if (close == std::string::npos) break;
        size_t open = llm_output.rfind('<', close);
        if (open == std::string::npos || open < pos) {
            pos = close + 1;
            continue;
        }
        pos = close + 1;
        const std::string body = llm_output.substr(open + 1, close - open - 1);

        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            size_t semi = body.find(';', start);
            if (semi == std::string::npos) {
                fields.push_back(body.substr(start));
                break;
            }
            fields.push_back(body.substr(start, semi - start));
            start = semi + 1;
        }
        if (fields.size() != 3) {
            ++out.skipped;
            continue;
        }
        KnowledgeTriple t;
        t.head = std::string(trim(fields[0]));
        t.relation = std::string(trim(fields[1]));
        t.tail = std::string(trim(fields[2]));
        t.source_doc_id = source_doc_id;
        if (!valid_triple(t)) {
            ++out.skipped;
            continue;
        }
        out.triples.push_back(std::move(t));
    }
    return out;
}

std::string build_extraction_prompt(const Document& doc, const PromptSet& prompts) {
    return render_prompt(prompts.extraction, {{"title", doc.title}, {"text", doc.text}});
}

ExtractionResult extract_triples(const Document& doc, ChatBackend& chat, KgCorpus& kg,
                                 const PromptSet& prompts) {
    const std::string prompt = build_extraction_prompt(doc, prompts);
    const std::string hash = prompt_fingerprint(prompt);

    if (const KgEntry* entry = kg.find(doc.doc_id); entry && entry->prompt_hash == hash) {
        return ExtractionResult{entry->triples, true, 0};
    }

    ChatRequest request;
    request.user = prompt;
    ChatResponse response;
    try {
        response = chat.complete(request);
    } catch (const std::exception& e) {
        throw std::runtime_error("extraction failed for doc '" + doc.doc_id + "': " + e.what());
    }

    ParsedTriples parsed = parse_triples(response.text, doc.doc_id);
    if (parsed.triples.empty() && !trim(response.text).empty()) {
        log_warn("no triples parsed from extraction output for doc '" + doc.doc_id + "'");
    }

    KgEntry entry;
    entry.triples = parsed.triples;
    entry.model = chat.name();
    entry.prompt_hash = hash;
    kg.put(doc.doc_id, std::move(entry));
    return ExtractionResult{std::move(parsed.triples), false, parsed.skipped};
}

ExtractCorpusStats extract_corpus(
    const DocumentStore& store, ChatBackend& chat, KgCorpus& kg, const PromptSet& prompts,
    unsigned threads, const std::function<void(const std::string&, const KgEntry&)>& on_entry) {
    ExtractCorpusStats stats;
    stats.total = store.size();
    std::mutex mu;

    parallel_for(store.size(), threads, [&](size_t i) {
        const Document& doc = store.docs()[i];
        const std::string prompt = build_extraction_prompt(doc, prompts);
        const std::string hash = prompt_fingerprint(prompt);
        {
            std::lock_guard<std::mutex> lock(mu);
            if (const KgEntry* entry = kg.find(doc.doc_id); entry && entry->prompt_hash == hash) {
                ++stats.cached;
                if (entry->triples.empty()) ++stats.zero_triple_docs;
                return;
            }
        }
        ChatRequest request;
        request.user = prompt;
        ChatResponse response;
        try {
            response = chat.complete(request);
        } catch (const std::exception& e) {
            throw std::runtime_error("extraction failed for doc '" + doc.doc_id + "': " + e.what());
        }
        ParsedTriples parsed = parse_triples(response.text, doc.doc_id);
        if (parsed.triples.empty() && !trim(response.text).empty())
            log_warn("no triples parsed from extraction output for doc '" + doc.doc_id + "'");

        KgEntry entry;
        entry.triples = std::move(parsed.triples);
        entry.model = chat.name();
        entry.prompt_hash = hash;
        {
            std::lock_guard<std::mutex> lock(mu);
            ++stats.extracted;
            stats.malformed_spans += parsed.skipped;
            if (entry.triples.empty()) ++stats.zero_triple_docs;
            kg.put(doc.doc_id, entry);
            if (on_entry) on_entry(doc.doc_id, *kg.find(doc.doc_id));
        }
    });
    return stats;
}

}  // namespace kirag
