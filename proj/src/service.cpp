#include "kirag/service.hpp"

#include <atomic>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "kirag/util.hpp"

namespace kirag {

using nlohmann::json;

struct RetrievalService::Impl {
    Engine& engine;
    httplib::Server server;
    std::thread worker;
    int bound_port = 0;
    std::atomic<uint64_t> error_counter{0};

    explicit Impl(Engine& e) : engine(e) { install_routes(); }

    struct BadRequest : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    static void reply_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    // question + optional k, validated; anything else is a 400.
    std::pair<std::string, int> parse_request(const httplib::Request& req) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            throw BadRequest(std::string("body is not valid JSON: ") + e.what());
        }
        if (!body.is_object()) throw BadRequest("body must be a JSON object");
        if (!body.contains("question") || !body["question"].is_string())
            throw BadRequest("\"question\" (string) is required");
        std::string question = body["question"].get<std::string>();
        if (trim(question).empty()) throw BadRequest("\"question\" must be nonempty");
        int k = engine.config.pipeline.final_k;
        if (body.contains("k")) {
            if (!body["k"].is_number_integer()) throw BadRequest("\"k\" must be an integer");
            k = body["k"].get<int>();
            if (k < 1) throw BadRequest("\"k\" must be >= 1");
        }
        for (auto it = body.begin(); it != body.end(); ++it)
            if (it.key() != "question" && it.key() != "k")
                throw BadRequest("unknown field \"" + it.key() + "\"");
        return {question, k};
    }

    void handle(const httplib::Request& req, httplib::Response& res, bool with_answer) {
        std::string question;
        int k = 0;
        try {
            std::tie(question, k) = parse_request(req);
        } catch (const BadRequest& e) {
            reply_json(res, 400, json{{"error", e.what()}});
            return;
        }
        try {
            PipelineStores stores = engine.stores();
            RetrievalTrace trace = retrieve(question, engine.config.pipeline, stores);
            json payload = retrieval_payload(trace, k);
            if (with_answer) {
                if (engine.reader_chat == nullptr)
                    throw std::runtime_error("no reader backend configured");
                auto ranked = ranked_with_fallback(trace, engine.config.pipeline.final_k);
                std::string text =
                    answer(question, ranked, engine.documents, *engine.reader_chat, engine.prompts);
                json out;
                out["answer"] = text;
                out["documents"] = payload["documents"];
                reply_json(res, 200, out);
            } else {
                reply_json(res, 200, payload);
            }
        } catch (const std::exception& e) {
            uint64_t n = error_counter.fetch_add(1) + 1;
            std::string id = to_hex(fnv1a64(std::to_string(n) + "|" + e.what()));
            log_error("request " + id + " failed: " + e.what());
            reply_json(res, 500, json{{"error", "internal error"}, {"id", id}});
        }
    }

    void install_routes() {
        server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            reply_json(res, 200, json{{"status", "ok"}});
        });
        server.Post("/retrieve", [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res, /*with_answer=*/false);
        });
        server.Post("/answer", [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res, /*with_answer=*/true);
        });
    }
};

RetrievalService::RetrievalService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

RetrievalService::~RetrievalService() { stop(); }

int RetrievalService::start(const std::string& host, int port) {
    if (port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(host);
        if (impl_->bound_port < 0) throw std::runtime_error("cannot bind to " + host);
    } else {
        if (!impl_->server.bind_to_port(host, port))
            throw std::runtime_error("cannot bind to " + host + ":" + std::to_string(port));
        impl_->bound_port = port;
    }
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->bound_port;
}

void RetrievalService::run(const std::string& host, int port) {
    impl_->bound_port = port;
    if (!impl_->server.listen(host, port))
        throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void RetrievalService::stop() {
    if (impl_ == nullptr) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

int RetrievalService::port() const { return impl_->bound_port; }

}  // namespace kirag
