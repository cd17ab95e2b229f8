#include "doctest.h"
#include "kirag/aligner.hpp"

#include <algorithm>
#include <set>

#include "support/fixtures.hpp"

using namespace kirag;

namespace {

KnowledgeTriple t(const std::string& h, const std::string& r, const std::string& v,
                  const std::string& doc = "d") {
    return {h, r, v, doc};
}

// Two gold docs whose triples admit exactly one 2-hop entity-linked chain for
// the toy question; the filler triples neither seed nor link, so they only
// feed the negative pool.
struct SilverFixture {
    KgCorpus kg;
    std::vector<std::string> gold = {"g1", "g2"};
    std::string question = "In which country is Kirton End?";

    SilverFixture() {
        kg.put("g1", KgEntry{{t("Kirton End", "location", "Boston", "g1"),
                              t("Skegness", "county", "Lincolnshire", "g1")},
                             "m", "h"});
        kg.put("g2", KgEntry{{t("Boston", "country", "England", "g2"),
                              t("Trent", "type", "river", "g2")},
                             "m", "h"});
    }
};

}  // namespace

TEST_CASE("decompose_chain yields one example per prefix") {
    std::vector<KnowledgeTriple> chain = {t("Kirton End", "location", "Boston"),
                                          t("Boston", "country", "England")};
    std::vector<KnowledgeTriple> pool = {chain[0], chain[1], t("x", "r", "y"), t("u", "r", "w"),
                                         t("p", "r", "q")};

    SUBCASE("2-triple chain gives 2 examples with growing prefixes") {
        auto examples = decompose_chain("q?", chain, pool, 2, 7);
        REQUIRE(examples.size() == 2);
        CHECK(examples[0].question == "q?");
        CHECK(examples[0].partial_chain.empty());
        CHECK(examples[0].positive.wire() == chain[0].wire());
        REQUIRE(examples[1].partial_chain.size() == 1);
        CHECK(examples[1].partial_chain[0].wire() == chain[0].wire());
        CHECK(examples[1].positive.wire() == chain[1].wire());
        for (const auto& ex : examples) {
            CHECK(ex.negatives.size() == 2);
            for (const auto& n : ex.negatives) CHECK(n.key() != ex.positive.key());
        }
    }

    SUBCASE("a pool of exactly n non-positives is used exhaustively") {
        std::vector<KnowledgeTriple> tight = {chain[0], t("a", "r", "b"), t("c", "r", "d"),
                                              t("e", "r", "f")};
        auto examples = decompose_chain("q?", {chain[0]}, tight, 3, 7);
        REQUIRE(examples.size() == 1);
        std::set<std::string> negs;
        for (const auto& n : examples[0].negatives) negs.insert(n.wire());
        CHECK(negs == std::set<std::string>{"<a; r; b>", "<c; r; d>", "<e; r; f>"});
    }

    SUBCASE("1-triple chain gives the base-case example") {
        auto examples = decompose_chain("q?", {chain[0]}, pool, 2, 7);
        REQUIRE(examples.size() == 1);
        CHECK(examples[0].partial_chain.empty());
    }

    SUBCASE("prefixes with too-small pools are skipped") {
        auto examples = decompose_chain("q?", chain, {chain[0], chain[1]}, 2, 7);
        CHECK(examples.empty());
    }

    SUBCASE("sampling is seeded") {
        auto a = decompose_chain("q?", chain, pool, 2, 7);
        auto b = decompose_chain("q?", chain, pool, 2, 7);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].negatives.size() == b[i].negatives.size());
            for (size_t j = 0; j < a[i].negatives.size(); ++j)
                CHECK(a[i].negatives[j].wire() == b[i].negatives[j].wire());
        }
        auto c = decompose_chain("q?", chain, pool, 2, 8);
        bool any_diff = false;
        for (size_t i = 0; i < a.size() && !any_diff; ++i)
            for (size_t j = 0; j < a[i].negatives.size(); ++j)
                if (a[i].negatives[j].wire() != c[i].negatives[j].wire()) any_diff = true;
        CHECK(any_diff);  // different seed reshuffles at least one draw
    }
}

TEST_CASE("enumerate_candidate_chains links triples by shared entities") {
    std::vector<KnowledgeTriple> pool = {t("Kirton End", "location", "Boston"),
                                         t("Boston", "country", "England"),
                                         t("Paris", "country", "France")};
    auto chains = enumerate_candidate_chains("In which country is Kirton End?", pool, 5, 4);
    REQUIRE_FALSE(chains.empty());

    // the 2-hop chain must appear; the France triple never links to it
    bool found = false;
    for (const auto& chain : chains) {
        if (chain.size() == 2 && chain[0].head == "Kirton End" && chain[1].tail == "England")
            found = true;
        for (size_t i = 1; i < chain.size(); ++i) {
            const auto& prev = chain[i - 1];
            const auto& cur = chain[i];
            bool linked = false;
            for (const std::string& a : {prev.head, prev.tail})
                for (const std::string& b : {cur.head, cur.tail})
                    if (normalized_key(a) == normalized_key(b)) linked = true;
            CHECK(linked);
        }
        std::set<std::string> keys;
        for (const auto& tr : chain) keys.insert(tr.key());
        CHECK(keys.size() == chain.size());  // no duplicate triples inside a chain
    }
    CHECK(found);

    SUBCASE("caps are respected") {
        CHECK(enumerate_candidate_chains("Kirton End?", pool, 1, 4).size() == 1);
        for (const auto& chain : enumerate_candidate_chains("Kirton End?", pool, 5, 1))
            CHECK(chain.size() == 1);
    }

    SUBCASE("no seed overlap with the question yields nothing") {
        CHECK(enumerate_candidate_chains("zebra habitats", pool, 5, 4).empty());
    }
}

TEST_CASE("build_silver_data keeps the first chain the reader answers correctly") {
    SilverFixture fx;
    PromptSet prompts;
    SilverConfig config;
    config.negatives = 2;

    SUBCASE("one valid 2-hop chain yields its 2 decomposed examples") {
        FunctionChatBackend reader([](const ChatRequest& r) {
            bool has_both = r.user.find("<Kirton End; location; Boston>") != std::string::npos &&
                            r.user.find("<Boston; country; England>") != std::string::npos;
            return std::string(has_both ? "England" : "no idea");
        });
        auto examples = build_silver_data(fx.question, fx.gold, {"England"}, reader, fx.kg,
                                          prompts, config);
        REQUIRE(examples.has_value());
        REQUIRE(examples->size() == 2);
        CHECK((*examples)[0].partial_chain.empty());
        CHECK((*examples)[0].positive.head == "Kirton End");
        CHECK((*examples)[1].positive.wire() == "<Boston; country; England>");
        for (const auto& ex : *examples) CHECK(ex.question == fx.question);
    }

    SUBCASE("an always-wrong reader filters the question out") {
        FunctionChatBackend reader([](const ChatRequest&) { return std::string("Mars"); });
        CHECK_FALSE(build_silver_data(fx.question, fx.gold, {"England"}, reader, fx.kg, prompts,
                                      config)
                        .has_value());
    }

    SUBCASE("a 1-triple chain suffices when the reader answers from it") {
        FunctionChatBackend reader([](const ChatRequest& r) {
            bool first = r.user.find("<Kirton End; location; Boston>") != std::string::npos;
            return std::string(first ? "Boston" : "wrong");
        });
        auto examples = build_silver_data("Where is Kirton End?", fx.gold, {"Boston"}, reader,
                                          fx.kg, prompts, config);
        REQUIRE(examples.has_value());
        CHECK(examples->size() == 1);
        CHECK((*examples)[0].positive.wire() == "<Kirton End; location; Boston>");
    }

    SUBCASE("gold docs without triples filter the question") {
        KgCorpus empty;
        FunctionChatBackend reader([](const ChatRequest&) { return std::string("England"); });
        CHECK_FALSE(build_silver_data(fx.question, fx.gold, {"England"}, reader, empty, prompts,
                                      config)
                        .has_value());
    }
}

TEST_CASE("training data persists through jsonl") {
    testing::TempDir dir;
    std::vector<TrainingExample> examples(2);
    examples[0].question = "q1";
    examples[0].positive = t("a", "r", "b", "g1");
    examples[0].negatives = {t("c", "r", "d", "g2")};
    examples[1].question = "q2";
    examples[1].partial_chain = {t("a", "r", "b", "g1")};
    examples[1].positive = t("b", "s", "e", "g2");
    examples[1].negatives = {t("c", "r", "d", "g2"), t("e", "r", "f", "g1")};

    save_training_data(dir.file("train.jsonl"), examples);
    auto loaded = load_training_data(dir.file("train.jsonl"));
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].question == "q1");
    CHECK(loaded[0].positive.wire() == "<a; r; b>");
    CHECK(loaded[0].positive.source_doc_id.empty());  // wires carry no provenance
    REQUIRE(loaded[1].partial_chain.size() == 1);
    CHECK(loaded[1].partial_chain[0].wire() == "<a; r; b>");
    CHECK(loaded[1].negatives.size() == 2);

    CHECK_THROWS_WITH_AS(load_training_data(dir.file("missing.jsonl")),
                         doctest::Contains("missing.jsonl"), std::runtime_error);
}
