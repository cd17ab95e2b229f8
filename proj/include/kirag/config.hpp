#pragma once

#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "kirag/aligner.hpp"
#include "kirag/backends.hpp"
#include "kirag/corpus.hpp"
#include "kirag/eval.hpp"
#include "kirag/index.hpp"
#include "kirag/pipeline.hpp"
#include "kirag/prompts.hpp"

namespace kirag {

/// One chat or embedding backend. kind selects the implementation:
///   "hash"     deterministic hash embedder (embedding only; dim, seed)
///   "http"     OpenAI-compatible endpoint (base_url, model, api_key, dim)
///   "scripted" replay from a script file (chat only; path, match, default)
struct BackendSpec {
    std::string kind;  // empty = not configured
    int dim = 64;
    uint64_t seed = 7;
    std::string base_url;
    std::string model;
    std::string api_key;
    std::string path;
    std::string match = "exact";
    std::optional<std::string> default_response;
};

struct RunPaths {
    std::string corpus;
    std::string kg;
    std::string index;
    std::string aligner;  // empty = identity projection
    std::string training_data;
    std::string dataset;
    std::string output_dir = "out";
    std::string prompt_extraction;  // template override files, empty = built-in
    std::string prompt_constructor;
    std::string prompt_reader;
};

struct ExtractionConfig {
    unsigned threads = 1;
    bool keep_first_duplicate = false;
};

/// The resolved run configuration. Loaded from strict JSON: unknown keys are
/// rejected at every level so typos fail loudly instead of silently taking
/// defaults.
struct RunConfig {
    uint64_t seed = 42;
    RunPaths paths;
    BackendSpec embedding{.kind = "hash"};
    BackendSpec constructor_chat;
    BackendSpec extractor_chat;
    BackendSpec reader_chat;
    bool cache_embeddings = true;
    PrefixConfig prefixes;
    PipelineConfig pipeline;
    TrainConfig training;
    SilverConfig silver;
    EvalOptions eval;
    ExtractionConfig extraction;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);

    /// Canonical JSON with every field resolved (defaults filled in).
    nlohmann::json resolved() const;

    /// Hex digest of the resolved config; stamped into traces, reports and
    /// model files so artifacts can be traced back to their settings.
    std::string fingerprint() const;
};

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const RunConfig& config);
std::shared_ptr<ChatBackend> make_chat_backend(const BackendSpec& spec, const std::string& role);

/// Everything a retrieve/answer/eval/serve run needs, loaded once and wired
/// into PipelineStores. The engine owns the stores; PipelineStores borrows.
struct Engine {
    RunConfig config;
    std::string config_fingerprint;
    PromptSet prompts;
    DocumentStore documents;
    KgCorpus kg;
    DenseIndex index;
    std::shared_ptr<EmbeddingBackend> embedding;
    std::shared_ptr<AlignerModel> aligner;
    std::shared_ptr<ChatBackend> constructor_chat;
    std::shared_ptr<ChatBackend> reader_chat;
    std::shared_ptr<ChatBackend> extractor_chat;
    std::shared_ptr<std::mutex> kg_mutex = std::make_shared<std::mutex>();

    PipelineStores stores();
};

struct EngineNeeds {
    bool reader = false;
    bool extractor = false;
};

/// Loads corpus, KG, index and aligner per the config. The constructor chat
/// backend is always required; reader/extractor only when asked for. A
/// missing aligner path yields the identity projection (untrained model).
Engine load_engine(const RunConfig& config, const EngineNeeds& needs = {});

}  // namespace kirag
