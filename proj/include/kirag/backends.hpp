#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kirag/util.hpp"

namespace kirag {

// ---------------------------------------------------------------------------
// Chat
// ---------------------------------------------------------------------------

struct ChatRequest {
    std::optional<std::string> system;
    std::string user;
    int max_tokens = 512;
    double temperature = 0.0;  // deterministic by default
};

struct ChatUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse {
    std::string text;  // completion, verbatim
    ChatUsage usage;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic chat backend driven by a prompt -> response script.
/// Exact mode matches the whole user prompt; Substring mode returns the first
/// entry (script order) whose key occurs inside the prompt.
class ScriptedChatBackend : public ChatBackend {
public:
    enum class Match { Exact, Substring };

    ScriptedChatBackend(std::vector<std::pair<std::string, std::string>> script, Match mode,
                        std::optional<std::string> default_response = std::nullopt);

    static std::shared_ptr<ScriptedChatBackend> from_file(
        const std::string& path, Match mode,
        std::optional<std::string> default_response = std::nullopt);

    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return "scripted"; }

    size_t calls() const { return calls_.load(); }

private:
    std::vector<std::pair<std::string, std::string>> script_;
    std::unordered_map<std::string, size_t> exact_lookup_;
    Match mode_;
    std::optional<std::string> default_response_;
    std::atomic<size_t> calls_{0};
};

/// Adapter for test code: wraps a callable as a chat backend.
class FunctionChatBackend : public ChatBackend {
public:
    explicit FunctionChatBackend(std::function<std::string(const ChatRequest&)> fn)
        : fn_(std::move(fn)) {}
    ChatResponse complete(const ChatRequest& request) override {
        ChatResponse resp;
        resp.text = fn_(request);
        resp.usage.completion_tokens = static_cast<int>(split_whitespace(resp.text).size());
        return resp;
    }
    std::string name() const override { return "function"; }

private:
    std::function<std::string(const ChatRequest&)> fn_;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

using EmbeddingVector = std::vector<float>;

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual int dimension() const = 0;
    /// Embeds a batch; output order matches input order. All vectors are
    /// unit-norm and share the backend dimension.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic embedding of a single text: lowercase, split on whitespace,
/// trim non-alphanumeric ASCII off token edges, map every token to a seeded
/// pseudo-random unit vector, average and L2-normalize. Empty or degenerate
/// input maps to the first basis vector.
EmbeddingVector hash_embed(const std::string& text, int dim, uint64_t seed);

class HashEmbedder : public EmbeddingBackend {
public:
    HashEmbedder(int dim, uint64_t seed);

    int dimension() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    std::string name() const override;

    uint64_t seed() const { return seed_; }
    size_t texts_embedded() const { return texts_.load(); }

private:
    int dim_;
    uint64_t seed_;
    std::atomic<size_t> texts_{0};
};

/// Memoizing wrapper: repeated texts hit the cache instead of the inner
/// backend. Raw (pre-projection) embeddings only, so cached entries stay
/// valid while a projection head trains.
class CachingEmbeddingBackend : public EmbeddingBackend {
public:
    explicit CachingEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner)
        : inner_(std::move(inner)) {}

    int dimension() const override { return inner_->dimension(); }
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    std::string name() const override { return inner_->name(); }

    size_t cache_size() const;

private:
    std::shared_ptr<EmbeddingBackend> inner_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
};

// ---------------------------------------------------------------------------
// HTTP backends (OpenAI-compatible wire format)
// ---------------------------------------------------------------------------

struct HttpBackendOptions {
    std::string base_url;  // e.g. "http://localhost:8000" or ".../v1 prefix host"
    std::string model;
    std::string api_key;  // empty -> no Authorization header
    int max_retries = 3;
    int initial_backoff_ms = 100;
    int max_backoff_ms = 2000;
    int timeout_s = 120;
};

/// POST {base}/v1/chat/completions; reads choices[0].message.content.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendOptions options) : options_(std::move(options)) {}
    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return "http-chat(" + options_.model + ")"; }

private:
    HttpBackendOptions options_;
};

/// POST {base}/v1/embeddings; reads data[i].embedding in input order.
class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(HttpBackendOptions options, int dim)
        : options_(std::move(options)), dim_(dim) {}
    int dimension() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    std::string name() const override { return "http-embed(" + options_.model + ")"; }

private:
    HttpBackendOptions options_;
    int dim_;
};

/// Role prefixes prepended to texts before embedding (some encoder families
/// expect "query: " / "passage: " markers). Both default to empty.
struct PrefixConfig {
    std::string query_prefix;
    std::string passage_prefix;
};

std::vector<EmbeddingVector> embed_queries(EmbeddingBackend& backend, const PrefixConfig& prefixes,
                                           const std::vector<std::string>& texts);
std::vector<EmbeddingVector> embed_passages(EmbeddingBackend& backend, const PrefixConfig& prefixes,
                                            const std::vector<std::string>& texts);

}  // namespace kirag
