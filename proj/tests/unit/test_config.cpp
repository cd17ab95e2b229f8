#include "doctest.h"
#include "kirag/config.hpp"

#include <fstream>

#include "support/fixtures.hpp"

using namespace kirag;
using nlohmann::json;

namespace {

json minimal_config() {
    return json{{"paths", {{"corpus", "c.jsonl"}, {"index", "i.bin"}}},
                {"backends",
                 {{"constructor", {{"kind", "scripted"}, {"path", "s.json"}}}}}};
}

}  // namespace

TEST_CASE("config defaults match the documented run settings") {
    RunConfig config = RunConfig::from_json(minimal_config());
    CHECK(config.seed == 42);
    CHECK(config.embedding.kind == "hash");
    CHECK(config.embedding.dim == 64);
    CHECK(config.cache_embeddings);
    CHECK(config.pipeline.max_iterations == 5);
    CHECK(config.pipeline.docs_per_iteration == 10);
    CHECK(config.pipeline.candidates_per_iteration == 20);
    CHECK(config.pipeline.final_k == 3);
    CHECK_FALSE(config.pipeline.online_extraction);
    CHECK(config.training.learning_rate == doctest::Approx(2e-5));
    CHECK(config.training.weight_decay == doctest::Approx(0.01));
    CHECK(config.training.batch_size == 64);
    CHECK(config.training.negatives == 7);
    CHECK(config.training.temperature == doctest::Approx(0.01));
    CHECK(config.training.epochs == 10);
    CHECK(config.silver.negatives == 7);
    CHECK(config.silver.max_chains == 5);
    CHECK(config.eval.recall_ks == std::vector<int>{3, 5});
    CHECK(config.paths.output_dir == "out");

    SUBCASE("section seeds inherit the top-level seed") {
        json j = minimal_config();
        j["seed"] = 777;
        RunConfig c = RunConfig::from_json(j);
        CHECK(c.seed == 777);
        CHECK(c.training.seed == 777);
        CHECK(c.silver.seed == 777);
    }
}

TEST_CASE("unknown keys are rejected at every level") {
    SUBCASE("top level") {
        json j = minimal_config();
        j["tpyo"] = 1;
        CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("tpyo"),
                             std::runtime_error);
    }
    SUBCASE("paths") {
        json j = minimal_config();
        j["paths"]["corpsu"] = "x";
        CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("corpsu"),
                             std::runtime_error);
    }
    SUBCASE("nested backend spec") {
        json j = minimal_config();
        j["backends"]["embedding"] = {{"kind", "hash"}, {"dmi", 32}};
        CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("dmi"),
                             std::runtime_error);
    }
    SUBCASE("pipeline section") {
        json j = minimal_config();
        j["pipeline"] = {{"max_iteratoins", 4}};
        CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("max_iteratoins"),
                             std::runtime_error);
    }
    SUBCASE("wrong types are reported") {
        json j = minimal_config();
        j["pipeline"] = {{"max_iterations", "five"}};
        CHECK_THROWS(RunConfig::from_json(j));
    }
    SUBCASE("invalid pipeline values fail validation") {
        json j = minimal_config();
        j["pipeline"] = {{"max_iterations", 0}};
        CHECK_THROWS(RunConfig::from_json(j));
    }
}

TEST_CASE("fingerprints are stable for equal configs and move with changes") {
    RunConfig a = RunConfig::from_json(minimal_config());
    RunConfig b = RunConfig::from_json(minimal_config());
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint().size() == 16);

    json changed = minimal_config();
    changed["pipeline"] = {{"final_k", 4}};
    CHECK(RunConfig::from_json(changed).fingerprint() != a.fingerprint());

    // defaults made explicit do not change the resolved form
    json explicit_defaults = minimal_config();
    explicit_defaults["seed"] = 42;
    explicit_defaults["pipeline"] = {{"final_k", 3}};
    CHECK(RunConfig::from_json(explicit_defaults).fingerprint() == a.fingerprint());
}

TEST_CASE("backend factories build what the spec names") {
    SUBCASE("hash embedding, optionally cached") {
        RunConfig config = RunConfig::from_json(minimal_config());
        auto be = make_embedding_backend(config);
        CHECK(be->dimension() == 64);
        CHECK(be->name() == "hash(dim=64,seed=7)");
    }

    SUBCASE("scripted chat requires the file to exist") {
        BackendSpec spec;
        spec.kind = "scripted";
        spec.path = "/nonexistent/script.json";
        CHECK_THROWS_WITH_AS(make_chat_backend(spec, "constructor"),
                             doctest::Contains("script"), std::runtime_error);
    }

    SUBCASE("scripted embedding is a contradiction") {
        RunConfig config = RunConfig::from_json(minimal_config());
        config.embedding.kind = "scripted";
        CHECK_THROWS(make_embedding_backend(config));
    }

    SUBCASE("unknown kinds name the field at fault") {
        BackendSpec spec;
        spec.kind = "quantum";
        CHECK_THROWS_WITH_AS(make_chat_backend(spec, "reader"),
                             doctest::Contains("backends.reader.kind"), std::runtime_error);
    }

    SUBCASE("unconfigured chat backends are reported with their role") {
        BackendSpec spec;  // kind empty
        CHECK_THROWS_WITH_AS(make_chat_backend(spec, "reader"), doctest::Contains("reader"),
                             std::runtime_error);
    }
}

TEST_CASE("load_engine wires a full toy run from files") {
    testing::TempDir dir;
    auto world = testing::make_toy_world();
    json config_json = testing::write_toy_files(world, dir);
    RunConfig config = RunConfig::from_json(config_json);

    SUBCASE("a missing index asks for the index command") {
        CHECK_THROWS_WITH_AS(load_engine(config), doctest::Contains("index"),
                             std::runtime_error);
    }

    SUBCASE("with the index built, the engine retrieves end to end") {
        auto embedding = make_embedding_backend(config);
        DocumentStore docs = DocumentStore::load_jsonl(config.paths.corpus);
        DenseIndex::build(docs.docs(), *embedding).save(config.paths.index);

        Engine engine = load_engine(config);
        CHECK(engine.documents.size() == 20);
        CHECK(engine.kg.size() == 20);
        CHECK(engine.aligner->is_identity());
        CHECK(engine.config_fingerprint == config.fingerprint());

        RetrievalTrace trace =
            retrieve(world.dataset[0].question, engine.config.pipeline, engine.stores());
        CHECK(trace.chain.terminal());
        CHECK(*trace.chain.answer == testing::toy_triplets()[0].country);

        SUBCASE("a reader need without a reader config fails loudly") {
            RunConfig no_reader = config;
            no_reader.reader_chat = BackendSpec{};
            EngineNeeds needs;
            needs.reader = true;
            CHECK_THROWS_WITH_AS(load_engine(no_reader, needs), doctest::Contains("reader"),
                                 std::runtime_error);
        }
    }

    SUBCASE("a missing corpus file is reported by path") {
        RunConfig broken = config;
        broken.paths.corpus = dir.file("absent.jsonl");
        CHECK_THROWS_WITH_AS(load_engine(broken), doctest::Contains("absent.jsonl"),
                             std::runtime_error);
    }

    SUBCASE("a set aligner path must exist") {
        auto embedding = make_embedding_backend(config);
        DocumentStore docs = DocumentStore::load_jsonl(config.paths.corpus);
        DenseIndex::build(docs.docs(), *embedding).save(config.paths.index);
        RunConfig broken = config;
        broken.paths.aligner = dir.file("missing_aligner.json");
        CHECK_THROWS_WITH_AS(load_engine(broken), doctest::Contains("missing_aligner.json"),
                             std::runtime_error);
    }
}

TEST_CASE("config file loading reports parse position") {
    testing::TempDir dir;
    std::ofstream(dir.file("bad.json")) << "{ not json";
    CHECK_THROWS(RunConfig::load(dir.file("bad.json")));
    CHECK_THROWS_WITH_AS(RunConfig::load(dir.file("gone.json")), doctest::Contains("gone.json"),
                         std::runtime_error);
}
