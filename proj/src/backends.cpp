#include "kirag/backends.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace kirag {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ScriptedChatBackend
// ---------------------------------------------------------------------------

ScriptedChatBackend::ScriptedChatBackend(std::vector<std::pair<std::string, std::string>> script,
                                         Match mode, std::optional<std::string> default_response)
    : script_(std::move(script)), mode_(mode), default_response_(std::move(default_response)) {
    if (mode_ == Match::Exact) {
        for (size_t i = 0; i < script_.size(); ++i) {
            exact_lookup_.emplace(script_[i].first, i);  // first entry wins on duplicates
        }
    }
}

std::shared_ptr<ScriptedChatBackend> ScriptedChatBackend::from_file(
    const std::string& path, Match mode, std::optional<std::string> default_response) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open script file: " + path);
    json doc = json::parse(in);

    std::vector<std::pair<std::string, std::string>> script;
    auto read_entries = [&script](const json& arr) {
        for (const auto& e : arr) {
            if (!e.is_object() || !e.contains("match") || !e.contains("response"))
                throw std::runtime_error("script entry must be {\"match\": ..., \"response\": ...}");
            script.emplace_back(e.at("match").get<std::string>(),
                                e.at("response").get<std::string>());
        }
    };
    if (doc.is_array()) {
        read_entries(doc);
    } else if (doc.is_object() && doc.contains("entries")) {
        read_entries(doc.at("entries"));
        if (doc.contains("default")) default_response = doc.at("default").get<std::string>();
    } else {
        throw std::runtime_error("script file must be an array or {\"entries\": [...]}: " + path);
    }
    return std::make_shared<ScriptedChatBackend>(std::move(script), mode,
                                                 std::move(default_response));
}

ChatResponse ScriptedChatBackend::complete(const ChatRequest& request) {
    calls_.fetch_add(1);
    const std::string* hit = nullptr;
    if (mode_ == Match::Exact) {
        auto it = exact_lookup_.find(request.user);
        if (it != exact_lookup_.end()) hit = &script_[it->second].second;
    } else {
        for (const auto& [key, response] : script_) {
            if (request.user.find(key) != std::string::npos) {
                hit = &response;
                break;
            }
        }
    }
    if (hit == nullptr) {
        if (!default_response_) {
            std::string head = request.user.substr(0, 120);
            throw std::runtime_error("scripted backend has no response for prompt: " + head);
        }
        hit = &*default_response_;
    }
    ChatResponse resp;
    resp.text = *hit;
    resp.usage.prompt_tokens = static_cast<int>(split_whitespace(request.user).size());
    resp.usage.completion_tokens = static_cast<int>(split_whitespace(resp.text).size());
    return resp;
}

// ---------------------------------------------------------------------------
// HashEmbedder
// ---------------------------------------------------------------------------

namespace {

double unit_uniform(uint64_t& state) {
    // 53-bit mantissa draw in [0, 1), shifted to [-1, 1).
    double u = static_cast<double>(splitmix64(state) >> 11) * (1.0 / 9007199254740992.0);
    return 2.0 * u - 1.0;
}

}  // namespace

EmbeddingVector hash_embed(const std::string& text, int dim, uint64_t seed) {
    if (dim < 2) throw std::invalid_argument("embedding dimension must be >= 2");
    std::vector<double> acc(static_cast<size_t>(dim), 0.0);
    std::vector<double> tok_vec(static_cast<size_t>(dim), 0.0);
    size_t used = 0;
    for (const auto& tok : tokenize_simple(text)) {
        uint64_t state = fnv1a64(tok) ^ (seed * 0x9e3779b97f4a7c15ull + 0xd1b54a32d192ed03ull);
        double sq = 0.0;
        for (int i = 0; i < dim; ++i) {
            tok_vec[static_cast<size_t>(i)] = unit_uniform(state);
            sq += tok_vec[static_cast<size_t>(i)] * tok_vec[static_cast<size_t>(i)];
        }
        if (sq <= 0.0) continue;
        double inv = 1.0 / std::sqrt(sq);
        for (int i = 0; i < dim; ++i) acc[static_cast<size_t>(i)] += tok_vec[static_cast<size_t>(i)] * inv;
        ++used;
    }
    EmbeddingVector out(static_cast<size_t>(dim), 0.0f);
    double sq = 0.0;
    for (double v : acc) sq += v * v;
    if (used == 0 || sq < 1e-24) {
        out[0] = 1.0f;
        return out;
    }
    double inv = 1.0 / std::sqrt(sq);
    for (int i = 0; i < dim; ++i) out[static_cast<size_t>(i)] = static_cast<float>(acc[static_cast<size_t>(i)] * inv);
    return out;
}

HashEmbedder::HashEmbedder(int dim, uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 2) throw std::invalid_argument("embedding dimension must be >= 2");
}

std::vector<EmbeddingVector> HashEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embed(t, dim_, seed_));
    texts_.fetch_add(texts.size());
    return out;
}

std::string HashEmbedder::name() const {
    return "hash(dim=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_) + ")";
}

// ---------------------------------------------------------------------------
// CachingEmbeddingBackend
// ---------------------------------------------------------------------------

std::vector<EmbeddingVector> CachingEmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::string> misses;
    std::vector<size_t> miss_pos;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        std::unordered_map<std::string, size_t> pending;  // dedupe within the batch
        for (size_t i = 0; i < texts.size(); ++i) {
            auto it = cache_.find(texts[i]);
            if (it != cache_.end()) {
                out[i] = it->second;
            } else if (auto p = pending.find(texts[i]); p == pending.end()) {
                pending.emplace(texts[i], misses.size());
                misses.push_back(texts[i]);
                miss_pos.push_back(i);
            } else {
                miss_pos.push_back(i);  // resolved after the fetch below
            }
        }
    }
    if (!misses.empty()) {
        auto fetched = inner_->embed_batch(misses);
        if (fetched.size() != misses.size())
            throw std::runtime_error("embedding backend returned wrong batch size");
        std::lock_guard<std::mutex> lock(mutex_);
        for (size_t j = 0; j < misses.size(); ++j) cache_[misses[j]] = std::move(fetched[j]);
        for (size_t i : miss_pos) out[i] = cache_.at(texts[i]);
    }
    return out;
}

size_t CachingEmbeddingBackend::cache_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.size();
}

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

namespace {

struct SplitUrl {
    std::string host;    // scheme://authority
    std::string prefix;  // path prefix without trailing slash, may be empty
};

SplitUrl split_base_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
        throw std::runtime_error("backend base_url must include a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.host = base_url;
    } else {
        out.host = base_url.substr(0, path_start);
        out.prefix = base_url.substr(path_start);
        while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    }
    return out;
}

json post_json(const HttpBackendOptions& options, const std::string& endpoint,
               const json& payload) {
    SplitUrl url = split_base_url(options.base_url);
    httplib::Client client(url.host);
    client.set_connection_timeout(options.timeout_s, 0);
    client.set_read_timeout(options.timeout_s, 0);
    httplib::Headers headers;
    if (!options.api_key.empty())
        headers.emplace("Authorization", "Bearer " + options.api_key);

    const std::string path = url.prefix + endpoint;
    const std::string body = payload.dump();
    int backoff_ms = options.initial_backoff_ms;
    for (int attempt = 0;; ++attempt) {
        auto res = client.Post(path, headers, body, "application/json");
        if (res) {
            if (res->status < 200 || res->status >= 300) {
                throw std::runtime_error("backend returned HTTP " + std::to_string(res->status) +
                                         " for " + path + ": " + res->body.substr(0, 400));
            }
            return json::parse(res->body);
        }
        if (attempt >= options.max_retries) {
            throw std::runtime_error("transport error talking to " + options.base_url + path +
                                     " after " + std::to_string(attempt + 1) + " attempts: " +
                                     httplib::to_string(res.error()));
        }
        log_warn("transport error (" + httplib::to_string(res.error()) + ") on " + path +
                 ", retrying in " + std::to_string(backoff_ms) + "ms");
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms = std::min(backoff_ms * 2, options.max_backoff_ms);
    }
}

}  // namespace

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
    json messages = json::array();
    if (request.system) messages.push_back({{"role", "system"}, {"content", *request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    json payload = {{"model", options_.model},
                    {"messages", messages},
                    {"max_tokens", request.max_tokens},
                    {"temperature", request.temperature}};
    json reply = post_json(options_, "/v1/chat/completions", payload);

    ChatResponse resp;
    try {
        resp.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed chat completion response: ") + e.what());
    }
    if (reply.contains("usage")) {
        const auto& u = reply["usage"];
        resp.usage.prompt_tokens = u.value("prompt_tokens", 0);
        resp.usage.completion_tokens = u.value("completion_tokens", 0);
    }
    return resp;
}

std::vector<EmbeddingVector> HttpEmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    json payload = {{"model", options_.model}, {"input", texts}};
    json reply = post_json(options_, "/v1/embeddings", payload);

    std::vector<EmbeddingVector> out(texts.size());
    try {
        const auto& data = reply.at("data");
        if (data.size() != texts.size())
            throw std::runtime_error("embedding response size mismatch: got " +
                                     std::to_string(data.size()) + ", want " +
                                     std::to_string(texts.size()));
        for (const auto& item : data) {
            size_t idx = item.at("index").get<size_t>();
            if (idx >= out.size()) throw std::runtime_error("embedding response index out of range");
            out[idx] = item.at("embedding").get<EmbeddingVector>();
            if (static_cast<int>(out[idx].size()) != dim_)
                throw std::runtime_error("embedding dimension mismatch: got " +
                                         std::to_string(out[idx].size()) + ", want " +
                                         std::to_string(dim_));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed embeddings response: ") + e.what());
    }
    return out;
}

std::vector<EmbeddingVector> embed_queries(EmbeddingBackend& backend, const PrefixConfig& prefixes,
                                           const std::vector<std::string>& texts) {
    if (prefixes.query_prefix.empty()) return backend.embed_batch(texts);
    std::vector<std::string> prefixed;
    prefixed.reserve(texts.size());
    for (const auto& t : texts) prefixed.push_back(prefixes.query_prefix + t);
    return backend.embed_batch(prefixed);
}

std::vector<EmbeddingVector> embed_passages(EmbeddingBackend& backend, const PrefixConfig& prefixes,
                                            const std::vector<std::string>& texts) {
    if (prefixes.passage_prefix.empty()) return backend.embed_batch(texts);
    std::vector<std::string> prefixed;
    prefixed.reserve(texts.size());
    for (const auto& t : texts) prefixed.push_back(prefixes.passage_prefix + t);
    return backend.embed_batch(prefixed);
}

}  // namespace kirag
