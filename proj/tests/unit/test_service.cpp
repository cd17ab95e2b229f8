#include "doctest.h"
#include "kirag/service.hpp"

#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "kirag/index.hpp"
#include "kirag/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace kirag;
using nlohmann::json;

namespace {

// Engine over the toy workspace plus a service bound to an ephemeral port.
struct ServiceFixture {
    testing::TempDir dir;
    testing::ToyWorld world = testing::make_toy_world();
    RunConfig config;
    Engine engine;
    RetrievalService service;
    int port = 0;

    static Engine make_engine(const testing::ToyWorld& world, testing::TempDir& dir,
                              RunConfig& config) {
        json config_json = testing::write_toy_files(world, dir);
        config = RunConfig::from_json(config_json);
        auto embedding = make_embedding_backend(config);
        DocumentStore docs = DocumentStore::load_jsonl(config.paths.corpus);
        DenseIndex::build(docs.docs(), *embedding).save(config.paths.index);
        return load_engine(config);
    }

    ServiceFixture() : engine(make_engine(world, dir, config)), service(engine) {
        port = service.start("127.0.0.1", 0);
        REQUIRE(port > 0);
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_connection_timeout(5);
        c.set_read_timeout(10);
        return c;
    }

    json post(const std::string& path, const json& body, int expect_status) {
        auto c = client();
        auto res = c.Post(path, body.dump(), "application/json");
        REQUIRE(res != nullptr);
        REQUIRE(res->status == expect_status);
        return json::parse(res->body);
    }
};

}  // namespace

TEST_CASE("service answers health checks") {
    ServiceFixture fx;
    auto c = fx.client();
    auto res = c.Get("/healthz");
    REQUIRE(res != nullptr);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body) == json{{"status", "ok"}});
}

TEST_CASE("service retrieve matches the in-process payload byte for byte") {
    ServiceFixture fx;
    const std::string q0 = fx.world.dataset[0].question;

    auto c = fx.client();
    auto res = c.Post("/retrieve", json{{"question", q0}}.dump(), "application/json");
    REQUIRE(res != nullptr);
    REQUIRE(res->status == 200);

    RetrievalTrace trace = retrieve(q0, fx.engine.config.pipeline, fx.engine.stores());
    json expected = retrieval_payload(trace, fx.engine.config.pipeline.final_k);
    CHECK(res->body == expected.dump());

    json payload = json::parse(res->body);
    REQUIRE(payload.at("documents").size() == 3);
    double prev = payload["documents"][0].at("score").get<double>();
    for (const auto& doc : payload["documents"]) {
        double s = doc.at("score").get<double>();
        CHECK(s <= prev + 1e-12);
        prev = s;
    }

    SUBCASE("k overrides the configured document count") {
        json one = fx.post("/retrieve", {{"question", q0}, {"k", 1}}, 200);
        CHECK(one.at("documents").size() == 1);
        CHECK(one["documents"][0] == payload["documents"][0]);
    }
}

TEST_CASE("service answer wraps the reader") {
    ServiceFixture fx;
    const auto& row0 = testing::toy_triplets()[0];
    json body = fx.post("/answer", {{"question", fx.world.dataset[0].question}}, 200);
    CHECK(body.at("answer") == row0.country);
    CHECK(body.at("documents").size() == 3);
}

TEST_CASE("service rejects malformed requests with 400") {
    ServiceFixture fx;
    const std::string q0 = fx.world.dataset[0].question;

    SUBCASE("missing question") {
        json body = fx.post("/retrieve", json::object(), 400);
        CHECK(body.at("error").get<std::string>().find("question") != std::string::npos);
    }
    SUBCASE("question of the wrong type") {
        json body = fx.post("/retrieve", {{"question", 42}}, 400);
        CHECK(body.at("error").get<std::string>().find("question") != std::string::npos);
    }
    SUBCASE("blank question") { fx.post("/retrieve", {{"question", "   "}}, 400); }
    SUBCASE("unknown field is named") {
        json body = fx.post("/retrieve", {{"question", q0}, {"foo", 1}}, 400);
        CHECK(body.at("error").get<std::string>().find("foo") != std::string::npos);
    }
    SUBCASE("k must be a positive integer") {
        fx.post("/retrieve", {{"question", q0}, {"k", "three"}}, 400);
        fx.post("/retrieve", {{"question", q0}, {"k", 0}}, 400);
    }
    SUBCASE("non-object body") {
        auto c = fx.client();
        auto res = c.Post("/retrieve", "[1, 2]", "application/json");
        REQUIRE(res != nullptr);
        CHECK(res->status == 400);
        CHECK(json::parse(res->body).at("error").get<std::string>().find("object") !=
              std::string::npos);
    }
    SUBCASE("invalid JSON body") {
        auto c = fx.client();
        auto res = c.Post("/retrieve", "{nope", "application/json");
        REQUIRE(res != nullptr);
        CHECK(res->status == 400);
    }
    SUBCASE("answer shares the validation") { fx.post("/answer", json::object(), 400); }
}

TEST_CASE("service hides pipeline failures behind opaque error ids") {
    ServiceFixture fx;
    // No scripted constructor entry matches, so the pipeline throws server-side.
    json first = fx.post("/retrieve", {{"question", "question nobody scripted"}}, 500);
    CHECK(first.at("error") == "internal error");
    std::string id = first.at("id").get<std::string>();
    CHECK(id.size() == 16);
    CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);

    json second = fx.post("/retrieve", {{"question", "question nobody scripted"}}, 500);
    CHECK(second.at("id").get<std::string>() != id);
}

TEST_CASE("service survives concurrent clients") {
    ServiceFixture fx;
    std::vector<std::string> expected;
    for (const auto& row : fx.world.dataset) {
        RetrievalTrace trace = retrieve(row.question, fx.engine.config.pipeline,
                                        fx.engine.stores());
        expected.push_back(retrieval_payload(trace, fx.engine.config.pipeline.final_k).dump());
    }

    const int workers = 8;
    std::vector<std::string> got(workers);
    std::vector<std::thread> threads;
    for (int i = 0; i < workers; ++i) {
        threads.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", fx.port);
            c.set_read_timeout(10);
            const auto& row = fx.world.dataset[i % fx.world.dataset.size()];
            auto res = c.Post("/retrieve", json{{"question", row.question}}.dump(),
                              "application/json");
            if (res && res->status == 200) got[i] = res->body;
        });
    }
    for (auto& t : threads) t.join();
    for (int i = 0; i < workers; ++i)
        CHECK(got[i] == expected[i % fx.world.dataset.size()]);
}

TEST_CASE("service start and stop are idempotent and report the bound port") {
    ServiceFixture fx;
    CHECK(fx.service.port() == fx.port);
    fx.service.stop();
    fx.service.stop();
    CHECK(fx.service.port() == fx.port);

    RetrievalService second(fx.engine);
    int port2 = second.start("127.0.0.1", 0);
    CHECK(port2 > 0);
    auto c = httplib::Client("127.0.0.1", port2);
    auto res = c.Get("/healthz");
    REQUIRE(res != nullptr);
    CHECK(res->status == 200);
    second.stop();
}
