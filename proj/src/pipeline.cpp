#include "kirag/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace kirag {

using nlohmann::json;

void PipelineConfig::validate() const {
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (docs_per_iteration < 1) throw std::invalid_argument("docs_per_iteration must be >= 1");
    if (candidates_per_iteration < 1)
        throw std::invalid_argument("candidates_per_iteration must be >= 1");
    if (final_k < 1) throw std::invalid_argument("final_k must be >= 1");
    if (doc_unit_char_budget < 1) throw std::invalid_argument("doc_unit_char_budget must be >= 1");
}

void PipelineStores::validate() const {
    if (!documents || !kg || !index || !aligner || !constructor_chat || !prompts)
        throw std::invalid_argument("pipeline stores are incompletely wired");
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    size_t start = 0;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (c == '.' || c == '?' || c == '!') {
            size_t j = i + 1;
            while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i + 1 && j < n && std::isupper(static_cast<unsigned char>(text[j]))) {
                std::string sentence = trim(text.substr(start, i + 1 - start));
                if (!sentence.empty()) out.push_back(std::move(sentence));
                start = j;
                i = j;
                continue;
            }
        }
        ++i;
    }
    std::string tail = trim(text.substr(start));
    if (!tail.empty()) out.push_back(std::move(tail));
    return out;
}

namespace {

std::string truncate_text(const std::string& text, size_t budget) {
    if (text.size() <= budget) return text;
    return text.substr(0, budget);
}

/// Gathers this iteration's candidate units from the searched documents,
/// excluding anything already in the chain.
std::vector<ChainUnit> gather_units(const std::vector<SearchHit>& hits, const ReasoningChain& chain,
                                    const PipelineConfig& config, const PipelineStores& stores,
                                    IterationRecord& record) {
    std::vector<ChainUnit> pool;
    for (const auto& hit : hits) {
        if (config.granularity == Granularity::Triple) {
            const std::vector<KnowledgeTriple>* triples = nullptr;
            std::vector<KnowledgeTriple> extracted;
            if (config.online_extraction && stores.extractor_chat) {
                std::lock_guard<std::mutex> lock(*stores.kg_mutex);
                ExtractionResult result = extract_triples(stores.documents->at(hit.doc_id),
                                                          *stores.extractor_chat, *stores.kg,
                                                          *stores.prompts);
                if (!result.cache_hit) ++record.extracted_docs;
                extracted = std::move(result.triples);
                triples = &extracted;
            } else {
                if (!stores.kg->contains(hit.doc_id)) {
                    ++record.skipped_docs;
                    continue;
                }
                triples = &stores.kg->triples_for(hit.doc_id);
            }
            for (const auto& t : *triples) {
                ChainUnit unit = ChainUnit::from_triple(t);
                if (!chain.contains(unit.key())) pool.push_back(std::move(unit));
            }
        } else {
            const Document* doc = stores.documents->find(hit.doc_id);
            if (!doc) {
                ++record.skipped_docs;
                continue;
            }
            if (config.granularity == Granularity::Document) {
                ChainUnit unit{truncate_text(doc->text, static_cast<size_t>(config.doc_unit_char_budget)),
                               doc->doc_id, std::nullopt};
                if (!unit.text.empty() && !chain.contains(unit.key())) pool.push_back(std::move(unit));
            } else {
                for (auto& sentence : split_sentences(doc->text)) {
                    ChainUnit unit{std::move(sentence), doc->doc_id, std::nullopt};
                    if (!chain.contains(unit.key())) pool.push_back(std::move(unit));
                }
            }
        }
    }
    return pool;
}

}  // namespace

RetrievalTrace retrieve(const std::string& question, const PipelineConfig& config,
                        const PipelineStores& stores) {
    config.validate();
    stores.validate();
    if (config.online_extraction && !stores.extractor_chat)
        throw std::invalid_argument("online extraction requires an extractor backend");

    const std::string label =
        config.granularity == Granularity::Triple ? "knowledge triples" : config.unit_label;

    RetrievalTrace trace;
    trace.question = question;
    size_t total_skipped = 0;

    EmbeddingBackend& search_backend = stores.aligner->backend();
    for (int i = 1; i <= config.max_iterations; ++i) {
        IterationRecord record;
        record.iteration = i;
        record.query = format_iterative_query(question, trace.chain, label);
        record.searched = stores.index->search(record.query, config.docs_per_iteration,
                                               search_backend);
        if (i == 1) trace.first_search = record.searched;

        std::vector<ChainUnit> pool = gather_units(record.searched, trace.chain, config, stores, record);
        record.unit_pool_size = pool.size();
        total_skipped += record.skipped_docs;
        if (pool.empty()) {
            record.outcome = to_string(ExtendOutcome::Kind::Exhausted);
            trace.iterations.push_back(std::move(record));
            break;
        }

        auto scored = stores.aligner->score_units(record.query, pool, i);
        record.candidates = select_candidates(std::move(scored), config.candidates_per_iteration);
        trace.accumulated.insert(trace.accumulated.end(), record.candidates.begin(),
                                 record.candidates.end());

        ExtendOutcome outcome = extend_chain(question, trace.chain, record.candidates,
                                             *stores.constructor_chat, *stores.prompts,
                                             config.granularity);
        record.outcome = to_string(outcome.kind);
        if (outcome.kind == ExtendOutcome::Kind::Extended) {
            record.via =
                outcome.via == ExtendOutcome::Via::Fallback ? "fallback" : "generated";
            record.appended_unit = outcome.unit->unit.text;
            trace.chain.steps.push_back(outcome.unit->unit);
            trace.iterations.push_back(std::move(record));
            continue;
        }
        if (outcome.kind == ExtendOutcome::Kind::Terminated) {
            trace.chain.answer = outcome.answer;
        }
        trace.iterations.push_back(std::move(record));
        break;
    }

    if (trace.accumulated.empty()) trace.used_search_fallback = true;
    if (total_skipped > 0)
        log_warn("retrieve('" + question + "'): " + std::to_string(total_skipped) +
                 " searched docs had no KG entry and were skipped");
    return trace;
}

RetrievalTrace run_granularity_variant(const std::string& question, const PipelineConfig& config,
                                       const PipelineStores& stores) {
    return retrieve(question, config, stores);
}

std::vector<RankedDocument> rank_documents(const RetrievalTrace& trace, int k) {
    if (k < 1) throw std::invalid_argument("rank_documents requires k >= 1");
    struct Best {
        double score = 0.0;
        int iteration = 0;
        const ScoredUnit* unit = nullptr;
    };
    std::map<std::string, Best> best_by_doc;
    for (const auto& su : trace.accumulated) {
        const std::string& doc_id = su.unit.source_doc_id;
        auto it = best_by_doc.find(doc_id);
        if (it == best_by_doc.end()) {
            best_by_doc.emplace(doc_id, Best{su.score, su.iteration, &su});
        } else if (su.score > it->second.score ||
                   (su.score == it->second.score && su.iteration < it->second.iteration)) {
            it->second = Best{su.score, su.iteration, &su};
        }
    }
    std::vector<RankedDocument> ranked;
    ranked.reserve(best_by_doc.size());
    for (const auto& [doc_id, best] : best_by_doc)
        ranked.push_back(RankedDocument{doc_id, best.score, best.unit->unit.text, best.iteration});
    std::sort(ranked.begin(), ranked.end(), [](const RankedDocument& a, const RankedDocument& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.best_iteration != b.best_iteration) return a.best_iteration < b.best_iteration;
        return a.doc_id < b.doc_id;
    });
    if (ranked.size() > static_cast<size_t>(k)) ranked.resize(static_cast<size_t>(k));
    return ranked;
}

std::vector<RankedDocument> ranked_with_fallback(RetrievalTrace& trace, int k) {
    std::vector<RankedDocument> ranked = rank_documents(trace, k);
    if (!ranked.empty() || trace.first_search.empty()) return ranked;
    trace.used_search_fallback = true;
    for (const auto& hit : trace.first_search) {
        if (ranked.size() >= static_cast<size_t>(k)) break;
        ranked.push_back(RankedDocument{hit.doc_id, hit.score, "", 0});
    }
    return ranked;
}

std::vector<RankedDocument> single_shot_rank(const std::string& question, int k,
                                             const PipelineStores& stores) {
    stores.validate();
    auto hits = stores.index->search(question, k, stores.aligner->backend());
    std::vector<RankedDocument> ranked;
    ranked.reserve(hits.size());
    for (const auto& hit : hits) ranked.push_back(RankedDocument{hit.doc_id, hit.score, "", 0});
    return ranked;
}

std::string answer(const std::string& question, const std::vector<RankedDocument>& ranked,
                   const DocumentStore& documents, ChatBackend& reader, const PromptSet& prompts) {
    std::string context;
    for (size_t i = 0; i < ranked.size(); ++i) {
        const Document& doc = documents.at(ranked[i].doc_id);
        if (i > 0) context += "\n\n";
        context += "Title: " + doc.title + "\nText: " + doc.text;
    }
    ChatRequest request;
    request.user = render_prompt(prompts.reader, {{"context", context}, {"question", question}});
    return trim(reader.complete(request).text);
}

namespace {

json scored_unit_to_json(const ScoredUnit& su) {
    return {{"text", su.unit.text},
            {"source_doc_id", su.unit.source_doc_id},
            {"score", su.score},
            {"iteration", su.iteration}};
}

}  // namespace

json trace_to_json(const RetrievalTrace& trace) {
    json iterations = json::array();
    for (const auto& rec : trace.iterations) {
        json searched = json::array();
        for (const auto& hit : rec.searched)
            searched.push_back({{"doc_id", hit.doc_id}, {"score", hit.score}});
        json candidates = json::array();
        for (const auto& su : rec.candidates) candidates.push_back(scored_unit_to_json(su));
        iterations.push_back({{"iteration", rec.iteration},
                              {"query", rec.query},
                              {"searched", std::move(searched)},
                              {"unit_pool_size", rec.unit_pool_size},
                              {"extracted_docs", rec.extracted_docs},
                              {"skipped_docs", rec.skipped_docs},
                              {"candidates", std::move(candidates)},
                              {"outcome", rec.outcome},
                              {"via", rec.via},
                              {"appended_unit", rec.appended_unit}});
    }
    json chain = json::array();
    for (const auto& step : trace.chain.steps)
        chain.push_back({{"text", step.text}, {"source_doc_id", step.source_doc_id}});
    json accumulated = json::array();
    for (const auto& su : trace.accumulated) accumulated.push_back(scored_unit_to_json(su));
    json doc = {{"schema_version", 1},
                {"question", trace.question},
                {"iterations", std::move(iterations)},
                {"chain", std::move(chain)},
                {"chain_answer", trace.chain.answer ? json(*trace.chain.answer) : json()},
                {"accumulated", std::move(accumulated)},
                {"used_search_fallback", trace.used_search_fallback},
                {"config_fingerprint", trace.config_fingerprint}};
    return doc;
}

json retrieval_payload(RetrievalTrace& trace, int k) {
    json documents = json::array();
    for (const auto& doc : ranked_with_fallback(trace, k)) {
        documents.push_back(
            {{"doc_id", doc.doc_id}, {"score", doc.score}, {"best_triple", doc.best_unit_text}});
    }
    json chain = json::array();
    for (const auto& step : trace.chain.steps)
        chain.push_back({{"text", step.text}, {"source_doc_id", step.source_doc_id}});
    return {{"documents", std::move(documents)},
            {"chain", std::move(chain)},
            {"iterations", trace.iterations.size()}};
}

}  // namespace kirag
