#include "kirag/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "kirag/util.hpp"

namespace kirag {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw std::runtime_error("config: " + where + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (allowed.count(it.key()) == 0)
            throw std::runtime_error("config: unknown key \"" + it.key() + "\" in " + where);
    }
}

std::string get_string(const json& obj, const char* key, const std::string& fallback,
                       const std::string& where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string())
        throw std::runtime_error("config: " + where + "." + key + " must be a string");
    return obj[key].get<std::string>();
}

double get_number(const json& obj, const char* key, double fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number())
        throw std::runtime_error("config: " + where + "." + key + " must be a number");
    return obj[key].get<double>();
}

int get_int(const json& obj, const char* key, int fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer())
        throw std::runtime_error("config: " + where + "." + key + " must be an integer");
    return obj[key].get<int>();
}

uint64_t get_uint64(const json& obj, const char* key, uint64_t fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer())
        throw std::runtime_error("config: " + where + "." + key + " must be an integer");
    return obj[key].get<uint64_t>();
}

bool get_bool(const json& obj, const char* key, bool fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean())
        throw std::runtime_error("config: " + where + "." + key + " must be a boolean");
    return obj[key].get<bool>();
}

BackendSpec parse_backend(const json& j, const std::string& where, BackendSpec base = {}) {
    check_keys(j, {"kind", "dim", "seed", "base_url", "model", "api_key", "path", "match", "default"}, where);
    BackendSpec spec = std::move(base);
    spec.kind = get_string(j, "kind", spec.kind, where);
    spec.dim = get_int(j, "dim", spec.dim, where);
    spec.seed = get_uint64(j, "seed", spec.seed, where);
    spec.base_url = get_string(j, "base_url", spec.base_url, where);
    spec.model = get_string(j, "model", spec.model, where);
    spec.api_key = get_string(j, "api_key", spec.api_key, where);
    spec.path = get_string(j, "path", spec.path, where);
    spec.match = get_string(j, "match", spec.match, where);
    if (j.contains("default")) {
        if (!j["default"].is_string())
            throw std::runtime_error("config: " + where + ".default must be a string");
        spec.default_response = j["default"].get<std::string>();
    }
    if (spec.kind != "" && spec.kind != "hash" && spec.kind != "http" && spec.kind != "scripted")
        throw std::runtime_error("config: " + where + ".kind must be one of hash, http, scripted");
    if (spec.match != "exact" && spec.match != "substring")
        throw std::runtime_error("config: " + where + ".match must be exact or substring");
    return spec;
}

json backend_to_json(const BackendSpec& spec) {
    json j;
    j["kind"] = spec.kind;
    j["dim"] = spec.dim;
    j["seed"] = spec.seed;
    j["base_url"] = spec.base_url;
    j["model"] = spec.model;
    j["api_key"] = spec.api_key;
    j["path"] = spec.path;
    j["match"] = spec.match;
    j["default"] = spec.default_response ? json(*spec.default_response) : json(nullptr);
    return j;
}

Granularity parse_granularity(const std::string& s) {
    if (s == "triple") return Granularity::Triple;
    if (s == "document") return Granularity::Document;
    if (s == "sentence") return Granularity::Sentence;
    throw std::runtime_error("config: granularity must be one of triple, document, sentence");
}

std::string granularity_name(Granularity g) {
    switch (g) {
        case Granularity::Triple: return "triple";
        case Granularity::Document: return "document";
        case Granularity::Sentence: return "sentence";
    }
    return "triple";
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j,
               {"seed", "paths", "backends", "pipeline", "training", "silver", "eval", "extraction"},
               "top level");
    RunConfig c;
    c.seed = get_uint64(j, "seed", c.seed, "top level");

    if (j.contains("paths")) {
        const json& p = j["paths"];
        check_keys(p,
                   {"corpus", "kg", "index", "aligner", "training_data", "dataset", "output_dir", "prompts"},
                   "paths");
        c.paths.corpus = get_string(p, "corpus", "", "paths");
        c.paths.kg = get_string(p, "kg", "", "paths");
        c.paths.index = get_string(p, "index", "", "paths");
        c.paths.aligner = get_string(p, "aligner", "", "paths");
        c.paths.training_data = get_string(p, "training_data", "", "paths");
        c.paths.dataset = get_string(p, "dataset", "", "paths");
        c.paths.output_dir = get_string(p, "output_dir", c.paths.output_dir, "paths");
        if (p.contains("prompts")) {
            const json& pr = p["prompts"];
            check_keys(pr, {"extraction", "constructor", "reader"}, "paths.prompts");
            c.paths.prompt_extraction = get_string(pr, "extraction", "", "paths.prompts");
            c.paths.prompt_constructor = get_string(pr, "constructor", "", "paths.prompts");
            c.paths.prompt_reader = get_string(pr, "reader", "", "paths.prompts");
        }
    }

    if (j.contains("backends")) {
        const json& b = j["backends"];
        check_keys(b,
                   {"embedding", "constructor", "extractor", "reader", "cache_embeddings", "query_prefix",
                    "passage_prefix"},
                   "backends");
        if (b.contains("embedding")) c.embedding = parse_backend(b["embedding"], "backends.embedding", c.embedding);
        if (b.contains("constructor"))
            c.constructor_chat = parse_backend(b["constructor"], "backends.constructor");
        if (b.contains("extractor")) c.extractor_chat = parse_backend(b["extractor"], "backends.extractor");
        if (b.contains("reader")) c.reader_chat = parse_backend(b["reader"], "backends.reader");
        c.cache_embeddings = get_bool(b, "cache_embeddings", c.cache_embeddings, "backends");
        c.prefixes.query_prefix = get_string(b, "query_prefix", "", "backends");
        c.prefixes.passage_prefix = get_string(b, "passage_prefix", "", "backends");
    }

    if (j.contains("pipeline")) {
        const json& p = j["pipeline"];
        check_keys(p,
                   {"max_iterations", "docs_per_iteration", "candidates_per_iteration", "final_k",
                    "granularity", "online_extraction", "unit_label", "doc_unit_char_budget"},
                   "pipeline");
        c.pipeline.max_iterations = get_int(p, "max_iterations", c.pipeline.max_iterations, "pipeline");
        c.pipeline.docs_per_iteration = get_int(p, "docs_per_iteration", c.pipeline.docs_per_iteration, "pipeline");
        c.pipeline.candidates_per_iteration =
            get_int(p, "candidates_per_iteration", c.pipeline.candidates_per_iteration, "pipeline");
        c.pipeline.final_k = get_int(p, "final_k", c.pipeline.final_k, "pipeline");
        c.pipeline.granularity =
            parse_granularity(get_string(p, "granularity", granularity_name(c.pipeline.granularity), "pipeline"));
        c.pipeline.online_extraction = get_bool(p, "online_extraction", c.pipeline.online_extraction, "pipeline");
        c.pipeline.unit_label = get_string(p, "unit_label", c.pipeline.unit_label, "pipeline");
        c.pipeline.doc_unit_char_budget =
            get_int(p, "doc_unit_char_budget", c.pipeline.doc_unit_char_budget, "pipeline");
    }

    if (j.contains("training")) {
        const json& t = j["training"];
        check_keys(t,
                   {"learning_rate", "weight_decay", "batch_size", "negatives", "temperature", "epochs", "seed"},
                   "training");
        c.training.learning_rate = get_number(t, "learning_rate", c.training.learning_rate, "training");
        c.training.weight_decay = get_number(t, "weight_decay", c.training.weight_decay, "training");
        c.training.batch_size = get_int(t, "batch_size", c.training.batch_size, "training");
        c.training.negatives = get_int(t, "negatives", c.training.negatives, "training");
        c.training.temperature = get_number(t, "temperature", c.training.temperature, "training");
        c.training.epochs = get_int(t, "epochs", c.training.epochs, "training");
        c.training.seed = get_uint64(t, "seed", c.seed, "training");
    } else {
        c.training.seed = c.seed;
    }

    if (j.contains("silver")) {
        const json& s = j["silver"];
        check_keys(s, {"negatives", "max_chains", "max_chain_len", "seed"}, "silver");
        c.silver.negatives = get_int(s, "negatives", c.silver.negatives, "silver");
        c.silver.max_chains = get_int(s, "max_chains", c.silver.max_chains, "silver");
        c.silver.max_chain_len = get_int(s, "max_chain_len", c.silver.max_chain_len, "silver");
        c.silver.seed = get_uint64(s, "seed", c.seed, "silver");
    } else {
        c.silver.seed = c.seed;
    }

    if (j.contains("eval")) {
        const json& e = j["eval"];
        check_keys(e, {"recall_ks", "per_step_k", "compute_answers", "threads", "write_traces"}, "eval");
        if (e.contains("recall_ks")) {
            if (!e["recall_ks"].is_array()) throw std::runtime_error("config: eval.recall_ks must be an array");
            c.eval.recall_ks.clear();
            for (const auto& k : e["recall_ks"]) {
                if (!k.is_number_integer())
                    throw std::runtime_error("config: eval.recall_ks entries must be integers");
                c.eval.recall_ks.push_back(k.get<int>());
            }
        }
        c.eval.per_step_k = get_int(e, "per_step_k", c.eval.per_step_k, "eval");
        c.eval.compute_answers = get_bool(e, "compute_answers", c.eval.compute_answers, "eval");
        c.eval.threads = static_cast<unsigned>(get_int(e, "threads", static_cast<int>(c.eval.threads), "eval"));
        c.eval.write_traces = get_bool(e, "write_traces", c.eval.write_traces, "eval");
    }

    if (j.contains("extraction")) {
        const json& x = j["extraction"];
        check_keys(x, {"threads", "keep_first_duplicate"}, "extraction");
        c.extraction.threads =
            static_cast<unsigned>(get_int(x, "threads", static_cast<int>(c.extraction.threads), "extraction"));
        c.extraction.keep_first_duplicate =
            get_bool(x, "keep_first_duplicate", c.extraction.keep_first_duplicate, "extraction");
    }

    c.pipeline.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("config: " + path + ": invalid JSON: " + e.what());
    }
    return from_json(j);
}

json RunConfig::resolved() const {
    json j;
    j["seed"] = seed;
    j["paths"] = {
        {"corpus", paths.corpus},
        {"kg", paths.kg},
        {"index", paths.index},
        {"aligner", paths.aligner},
        {"training_data", paths.training_data},
        {"dataset", paths.dataset},
        {"output_dir", paths.output_dir},
        {"prompts",
         {{"extraction", paths.prompt_extraction},
          {"constructor", paths.prompt_constructor},
          {"reader", paths.prompt_reader}}},
    };
    j["backends"] = {
        {"embedding", backend_to_json(embedding)},
        {"constructor", backend_to_json(constructor_chat)},
        {"extractor", backend_to_json(extractor_chat)},
        {"reader", backend_to_json(reader_chat)},
        {"cache_embeddings", cache_embeddings},
        {"query_prefix", prefixes.query_prefix},
        {"passage_prefix", prefixes.passage_prefix},
    };
    j["pipeline"] = {
        {"max_iterations", pipeline.max_iterations},
        {"docs_per_iteration", pipeline.docs_per_iteration},
        {"candidates_per_iteration", pipeline.candidates_per_iteration},
        {"final_k", pipeline.final_k},
        {"granularity", granularity_name(pipeline.granularity)},
        {"online_extraction", pipeline.online_extraction},
        {"unit_label", pipeline.unit_label},
        {"doc_unit_char_budget", pipeline.doc_unit_char_budget},
    };
    j["training"] = {
        {"learning_rate", training.learning_rate},
        {"weight_decay", training.weight_decay},
        {"batch_size", training.batch_size},
        {"negatives", training.negatives},
        {"temperature", training.temperature},
        {"epochs", training.epochs},
        {"seed", training.seed},
    };
    j["silver"] = {
        {"negatives", silver.negatives},
        {"max_chains", silver.max_chains},
        {"max_chain_len", silver.max_chain_len},
        {"seed", silver.seed},
    };
    j["eval"] = {
        {"recall_ks", eval.recall_ks},
        {"per_step_k", eval.per_step_k},
        {"compute_answers", eval.compute_answers},
        {"threads", eval.threads},
        {"write_traces", eval.write_traces},
    };
    j["extraction"] = {
        {"threads", extraction.threads},
        {"keep_first_duplicate", extraction.keep_first_duplicate},
    };
    j["prompt_version"] = kPromptVersion;
    return j;
}

std::string RunConfig::fingerprint() const { return to_hex(fnv1a64(resolved().dump())); }

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const RunConfig& config) {
    const BackendSpec& spec = config.embedding;
    std::shared_ptr<EmbeddingBackend> backend;
    if (spec.kind == "hash") {
        backend = std::make_shared<HashEmbedder>(spec.dim, spec.seed);
    } else if (spec.kind == "http") {
        if (spec.base_url.empty())
            throw std::runtime_error("config: backends.embedding.base_url is required for kind http");
        HttpBackendOptions options;
        options.base_url = spec.base_url;
        options.model = spec.model;
        options.api_key = spec.api_key;
        backend = std::make_shared<HttpEmbeddingBackend>(options, spec.dim);
    } else if (spec.kind == "scripted") {
        throw std::runtime_error("config: scripted backends provide chat, not embeddings");
    } else {
        throw std::runtime_error("config: embedding backend is not configured");
    }
    if (config.cache_embeddings) backend = std::make_shared<CachingEmbeddingBackend>(backend);
    return backend;
}

std::shared_ptr<ChatBackend> make_chat_backend(const BackendSpec& spec, const std::string& role) {
    if (spec.kind.empty())
        throw std::runtime_error("config: " + role + " chat backend is not configured");
    if (spec.kind == "scripted") {
        if (spec.path.empty())
            throw std::runtime_error("config: backends." + role + ".path is required for kind scripted");
        auto match = spec.match == "substring" ? ScriptedChatBackend::Match::Substring
                                               : ScriptedChatBackend::Match::Exact;
        return ScriptedChatBackend::from_file(spec.path, match, spec.default_response);
    }
    if (spec.kind == "http") {
        if (spec.base_url.empty())
            throw std::runtime_error("config: backends." + role + ".base_url is required for kind http");
        HttpBackendOptions options;
        options.base_url = spec.base_url;
        options.model = spec.model;
        options.api_key = spec.api_key;
        return std::make_shared<HttpChatBackend>(options);
    }
    throw std::runtime_error("config: backends." + role + ".kind must be scripted or http");
}

PipelineStores Engine::stores() {
    PipelineStores s;
    s.documents = &documents;
    s.kg = &kg;
    s.index = &index;
    s.aligner = aligner.get();
    s.constructor_chat = constructor_chat.get();
    s.reader_chat = reader_chat.get();
    s.extractor_chat = extractor_chat.get();
    s.prompts = &prompts;
    s.kg_mutex = kg_mutex;
    return s;
}

Engine load_engine(const RunConfig& config, const EngineNeeds& needs) {
    namespace fs = std::filesystem;
    Engine engine;
    engine.config = config;
    engine.config_fingerprint = config.fingerprint();
    engine.prompts = PromptSet::with_overrides(
        config.paths.prompt_extraction.empty() ? std::nullopt
                                               : std::optional<std::string>(config.paths.prompt_extraction),
        config.paths.prompt_constructor.empty() ? std::nullopt
                                                : std::optional<std::string>(config.paths.prompt_constructor),
        config.paths.prompt_reader.empty() ? std::nullopt
                                           : std::optional<std::string>(config.paths.prompt_reader));

    if (config.paths.corpus.empty()) throw std::runtime_error("config: paths.corpus is required");
    engine.documents = DocumentStore::load_jsonl(config.paths.corpus, config.extraction.keep_first_duplicate);

    if (!config.paths.kg.empty() && fs::exists(config.paths.kg)) {
        engine.kg = KgCorpus::load(config.paths.kg);
    } else if (!config.pipeline.online_extraction && config.pipeline.granularity == Granularity::Triple) {
        log_warn("no knowledge corpus at \"" + config.paths.kg +
                 "\"; triple retrieval will fall back to dense search");
    }

    if (config.paths.index.empty()) throw std::runtime_error("config: paths.index is required");
    if (!fs::exists(config.paths.index))
        throw std::runtime_error("index file not found: " + config.paths.index + " (run the index command first)");
    engine.index = DenseIndex::load(config.paths.index);

    engine.embedding = make_embedding_backend(config);
    if (!config.paths.aligner.empty()) {
        if (!fs::exists(config.paths.aligner))
            throw std::runtime_error("aligner model not found: " + config.paths.aligner);
        engine.aligner =
            std::make_shared<AlignerModel>(AlignerModel::load(config.paths.aligner, engine.embedding));
    } else {
        engine.aligner = std::make_shared<AlignerModel>(engine.embedding, config.prefixes);
    }

    engine.constructor_chat = make_chat_backend(config.constructor_chat, "constructor");
    if (needs.reader || config.eval.compute_answers) {
        if (!config.reader_chat.kind.empty())
            engine.reader_chat = make_chat_backend(config.reader_chat, "reader");
        else if (needs.reader)
            throw std::runtime_error("config: backends.reader is required for this command");
    }
    if (config.pipeline.online_extraction || needs.extractor)
        engine.extractor_chat = make_chat_backend(config.extractor_chat, "extractor");
    return engine;
}

}  // namespace kirag
