#include "doctest.h"
#include "kirag/backends.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/fixtures.hpp"

using namespace kirag;

namespace {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    double dot = 0.0;
    for (size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * double(b[i]);
    return dot;  // inputs are unit-norm
}

double norm(const EmbeddingVector& v) {
    double s = 0.0;
    for (float x : v) s += double(x) * double(x);
    return std::sqrt(s);
}

ChatRequest req(const std::string& user) {
    ChatRequest r;
    r.user = user;
    return r;
}

}  // namespace

TEST_CASE("scripted backend: exact match, first-wins substring, default, miss") {
    std::vector<std::pair<std::string, std::string>> script = {
        {"alpha", "first"},
        {"alpha beta", "second"},
    };

    SUBCASE("exact mode matches the whole prompt only") {
        ScriptedChatBackend be(script, ScriptedChatBackend::Match::Exact);
        CHECK(be.complete(req("alpha")).text == "first");
        CHECK(be.complete(req("alpha beta")).text == "second");
        CHECK_THROWS_AS(be.complete(req("alpha beta gamma")), std::runtime_error);
        CHECK(be.calls() == 3);
    }

    SUBCASE("substring mode takes the first entry in script order") {
        ScriptedChatBackend be(script, ScriptedChatBackend::Match::Substring);
        // both keys occur; entry order decides
        CHECK(be.complete(req("say alpha beta now")).text == "first");
    }

    SUBCASE("default response covers misses instead of throwing") {
        ScriptedChatBackend be(script, ScriptedChatBackend::Match::Substring, "fallback");
        CHECK(be.complete(req("nothing matches")).text == "fallback");
    }

    SUBCASE("usage counts whitespace tokens") {
        ScriptedChatBackend be({{"q", "two words"}}, ScriptedChatBackend::Match::Substring);
        ChatResponse resp = be.complete(req("a q prompt"));
        CHECK(resp.usage.prompt_tokens == 3);
        CHECK(resp.usage.completion_tokens == 2);
    }
}

TEST_CASE("scripted backend loads both script file shapes") {
    testing::TempDir dir;

    SUBCASE("bare array") {
        std::ofstream(dir.file("s.json")) << R"([{"match": "hi", "response": "hello"}])";
        auto be = ScriptedChatBackend::from_file(dir.file("s.json"),
                                                 ScriptedChatBackend::Match::Substring);
        CHECK(be->complete(req("hi there")).text == "hello");
        CHECK_THROWS(be->complete(req("bye")));
    }

    SUBCASE("entries object with default") {
        std::ofstream(dir.file("s.json"))
            << R"({"entries": [{"match": "hi", "response": "hello"}], "default": "dunno"})";
        auto be = ScriptedChatBackend::from_file(dir.file("s.json"),
                                                 ScriptedChatBackend::Match::Substring);
        CHECK(be->complete(req("bye")).text == "dunno");
    }

    SUBCASE("malformed entry is rejected") {
        std::ofstream(dir.file("s.json")) << R"([{"match": "hi"}])";
        CHECK_THROWS_AS(ScriptedChatBackend::from_file(dir.file("s.json"),
                                                       ScriptedChatBackend::Match::Exact),
                        std::runtime_error);
    }

    SUBCASE("missing file is reported by path") {
        CHECK_THROWS_WITH_AS(
            ScriptedChatBackend::from_file(dir.file("absent.json"),
                                           ScriptedChatBackend::Match::Exact),
            doctest::Contains("absent.json"), std::runtime_error);
    }
}

TEST_CASE("function backend forwards the callable's output") {
    FunctionChatBackend be([](const ChatRequest& r) { return "echo: " + r.user; });
    CHECK(be.complete(req("x")).text == "echo: x");
}

TEST_CASE("hash_embed: deterministic unit vectors with token-overlap geometry") {
    EmbeddingVector boston = hash_embed("boston", 64, 7);

    SUBCASE("repeat calls agree exactly") {
        CHECK(hash_embed("boston", 64, 7) == boston);
    }

    SUBCASE("unit norm") {
        CHECK(norm(boston) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(norm(hash_embed("a longer sentence with several tokens", 32, 1)) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }

    SUBCASE("case and surrounding punctuation do not change tokens") {
        CHECK(hash_embed("Boston.", 64, 7) == boston);
        CHECK(hash_embed("  BOSTON  ", 64, 7) == boston);
    }

    SUBCASE("token overlap beats disjoint tokens; pinned values") {
        double shared = cosine(hash_embed("boston port", 64, 7), boston);
        double disjoint = cosine(hash_embed("kirton", 64, 7), boston);
        CHECK(shared == doctest::Approx(0.735436).epsilon(1e-4));
        CHECK(disjoint == doctest::Approx(-0.170646).epsilon(1e-4));
        CHECK(shared > disjoint);
    }

    SUBCASE("token order does not matter (bag of tokens)") {
        CHECK(hash_embed("boston port", 64, 7) == hash_embed("port boston", 64, 7));
    }

    SUBCASE("different seeds give different spaces") {
        CHECK(hash_embed("boston", 64, 8) != boston);
    }

    SUBCASE("empty and punctuation-only input map to the first basis vector") {
        EmbeddingVector e0 = hash_embed("", 8, 3);
        CHECK(e0[0] == doctest::Approx(1.0));
        for (int i = 1; i < 8; ++i) CHECK(e0[i] == doctest::Approx(0.0));
        CHECK(hash_embed("...", 8, 3) == e0);
    }

    SUBCASE("dimension below 2 is rejected") {
        CHECK_THROWS_AS(hash_embed("x", 1, 7), std::invalid_argument);
        CHECK_THROWS_AS(hash_embed("x", 0, 7), std::invalid_argument);
    }
}

TEST_CASE("HashEmbedder batches match single-text embeds and count texts") {
    HashEmbedder be(64, 7);
    auto out = be.embed_batch({"boston", "kirton", "boston port"});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == hash_embed("boston", 64, 7));
    CHECK(out[1] == hash_embed("kirton", 64, 7));
    CHECK(out[2] == hash_embed("boston port", 64, 7));
    CHECK(be.dimension() == 64);
    CHECK(be.seed() == 7);
    CHECK(be.texts_embedded() == 3);
}

TEST_CASE("caching backend dedupes within and across batches") {
    auto inner = std::make_shared<HashEmbedder>(32, 5);
    CachingEmbeddingBackend cached(inner);

    auto first = cached.embed_batch({"a", "b", "a"});
    CHECK(inner->texts_embedded() == 2);  // duplicate "a" collapsed
    CHECK(first[0] == first[2]);
    CHECK(cached.cache_size() == 2);

    auto second = cached.embed_batch({"b", "c"});
    CHECK(inner->texts_embedded() == 3);  // only "c" is new
    CHECK(second[0] == first[1]);
    CHECK(cached.dimension() == 32);
}

TEST_CASE("role prefixes are prepended before embedding") {
    HashEmbedder be(32, 9);
    PrefixConfig prefixes{"query: ", "passage: "};
    auto q = embed_queries(be, prefixes, {"boston"});
    auto p = embed_passages(be, prefixes, {"boston"});
    CHECK(q[0] == hash_embed("query: boston", 32, 9));
    CHECK(p[0] == hash_embed("passage: boston", 32, 9));

    PrefixConfig none;
    CHECK(embed_queries(be, none, {"boston"})[0] == hash_embed("boston", 32, 9));
}
