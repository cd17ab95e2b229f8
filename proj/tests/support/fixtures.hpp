#pragma once

// Shared toy world for pipeline-level tests: five two-hop questions of the
// form "In which country was {person} born?". The person document links the
// person to a hamlet, the hamlet document links the hamlet to a country, and
// two distractor documents per question share surface tokens with the
// question ("country", "born") so plain dense search ranks them above the
// hamlet document. Scripted constructor and reader backends replay the
// correct chains deterministically.

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kirag/aligner.hpp"
#include "kirag/backends.hpp"
#include "kirag/corpus.hpp"
#include "kirag/eval.hpp"
#include "kirag/index.hpp"
#include "kirag/pipeline.hpp"
#include "kirag/prompts.hpp"

namespace kirag::testing {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        uint64_t tag = (static_cast<uint64_t>(rd()) << 32) ^ rd();
        path_ = fs::temp_directory_path() / ("kirag_test_" + to_hex(tag));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

struct ToyTriplet {
    std::string person;
    std::string hamlet;
    std::string country;
};

inline const std::vector<ToyTriplet>& toy_triplets() {
    static const std::vector<ToyTriplet> data = {
        {"Alice Brontel", "Kestrel Hollow", "Velandia"},
        {"Bruno Castell", "Mirefield Glen", "Orvania"},
        {"Carla Dunmore", "Thornbeck Vale", "Lusteria"},
        {"Derek Ellwood", "Fennwick Marsh", "Quorivia"},
        {"Edith Farrow", "Grimsley Crag", "Tavaland"},
    };
    return data;
}

inline std::string toy_question(const ToyTriplet& t) {
    return "In which country was " + t.person + " born?";
}

struct ToyWorld {
    std::vector<Document> docs;
    KgCorpus kg;
    std::vector<EvalExample> dataset;
    // Ordered substring scripts; most specific entries first.
    std::vector<std::pair<std::string, std::string>> constructor_script;
    std::vector<std::pair<std::string, std::string>> reader_script;        // keyed on the question
    std::vector<std::pair<std::string, std::string>> silver_reader_script; // keyed on the chain context
    std::vector<std::pair<std::string, std::string>> extractor_script;     // keyed on the document title
};

inline ToyWorld make_toy_world() {
    ToyWorld world;
    std::string extraction_hash = prompt_fingerprint(PromptSet{}.extraction);
    int i = 0;
    for (const auto& t : toy_triplets()) {
        ++i;
        std::string tag = std::to_string(i);
        Document person{"p" + tag, t.person, t.person + " was born in " + t.hamlet + "."};
        Document hamlet{"h" + tag, t.hamlet, t.hamlet + " lies in " + t.country + "."};
        // Distractors share question tokens ("which country was") so plain
        // dense search ranks them above the hamlet document, but their
        // triples share no tokens with any query.
        Document da{"d" + tag + "a", "Country quiz",
                    "Which country has the longest coastline was a quiz question."};
        Document db{"d" + tag + "b", "Quiz nights",
                    "The quiz asked in which country the tallest tower was built."};
        world.docs.insert(world.docs.end(), {person, hamlet, da, db});

        KnowledgeTriple born{t.person, "birthplace", t.hamlet, person.doc_id};
        KnowledgeTriple located{t.hamlet, "country", t.country, hamlet.doc_id};
        world.kg.put(person.doc_id, {{born}, "scripted", extraction_hash});
        world.kg.put(hamlet.doc_id, {{located}, "scripted", extraction_hash});
        world.kg.put(da.doc_id,
                     {{{"coastline quiz", "lists", "shoreline lengths", da.doc_id}}, "scripted",
                      extraction_hash});
        world.kg.put(db.doc_id,
                     {{{"tower quiz", "lists", "tall structures", db.doc_id}}, "scripted",
                      extraction_hash});

        EvalExample ex;
        ex.question = toy_question(t);
        ex.gold_doc_ids = {person.doc_id, hamlet.doc_id};
        ex.gold_order_known = true;
        ex.answers = {t.country};
        world.dataset.push_back(ex);

        // Constructor: one entry per iteration, most specific first so the
        // longest chain state wins under substring matching.
        std::string step1 = born.wire();
        std::string step2 = located.wire();
        world.constructor_script.emplace_back("Thought: " + step1 + "," + step2,
                                              "So the answer is " + t.country + ".");
        world.constructor_script.emplace_back("Thought: " + step1, step2);
        world.constructor_script.emplace_back("Question: " + ex.question + "\nThought: ", step1);

        world.reader_script.emplace_back("Question: " + ex.question + "\nAnswer:", t.country);
        world.silver_reader_script.emplace_back(
            "Context: " + step1 + ", " + step2 + "\nQuestion: " + ex.question, t.country);

        world.extractor_script.emplace_back("Title: " + person.title + "\n", step1);
        world.extractor_script.emplace_back("Title: " + hamlet.title + "\n", step2);
    }
    // Distractor titles repeat across questions; one shared entry each.
    world.extractor_script.emplace_back("Title: Country quiz\n",
                                        "<coastline quiz; lists; shoreline lengths>");
    world.extractor_script.emplace_back("Title: Quiz nights\n", "<tower quiz; lists; tall structures>");
    return world;
}

inline std::shared_ptr<ScriptedChatBackend> script_backend(
    std::vector<std::pair<std::string, std::string>> script,
    std::optional<std::string> fallback = std::nullopt) {
    return std::make_shared<ScriptedChatBackend>(std::move(script),
                                                 ScriptedChatBackend::Match::Substring,
                                                 std::move(fallback));
}

/// In-memory engine over the toy world, ready for retrieve()/evaluate_run().
struct ToyEngine {
    ToyWorld world;
    DocumentStore documents;
    std::shared_ptr<EmbeddingBackend> embedding;
    DenseIndex index;
    std::shared_ptr<AlignerModel> aligner;
    std::shared_ptr<ScriptedChatBackend> constructor_chat;
    std::shared_ptr<ScriptedChatBackend> reader_chat;
    PromptSet prompts;
    std::shared_ptr<std::mutex> kg_mutex = std::make_shared<std::mutex>();

    PipelineStores stores() {
        PipelineStores s;
        s.documents = &documents;
        s.kg = &world.kg;
        s.index = &index;
        s.aligner = aligner.get();
        s.constructor_chat = constructor_chat.get();
        s.reader_chat = reader_chat.get();
        s.prompts = &prompts;
        s.kg_mutex = kg_mutex;
        return s;
    }
};

inline ToyEngine make_toy_engine(int dim = 256, uint64_t seed = 7) {
    ToyEngine engine;
    engine.world = make_toy_world();
    engine.documents = DocumentStore::from_documents(engine.world.docs);
    engine.embedding = std::make_shared<HashEmbedder>(dim, seed);
    engine.index = DenseIndex::build(engine.world.docs, *engine.embedding);
    engine.aligner = std::make_shared<AlignerModel>(engine.embedding);
    engine.constructor_chat = script_backend(engine.world.constructor_script);
    engine.reader_chat = script_backend(engine.world.reader_script, "unknown");
    return engine;
}

inline void write_script_file(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& script,
                              const std::optional<std::string>& fallback = std::nullopt) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [match, response] : script)
        entries.push_back({{"match", match}, {"response", response}});
    nlohmann::json j;
    j["entries"] = entries;
    if (fallback) j["default"] = *fallback;
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << "\n";
}

inline void write_dataset_file(const std::string& path, const std::vector<EvalExample>& dataset) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& ex : dataset) {
        nlohmann::json j;
        j["question"] = ex.question;
        j["gold_doc_ids"] = ex.gold_doc_ids;
        j["gold_order_known"] = ex.gold_order_known;
        j["answers"] = ex.answers;
        out << j.dump() << "\n";
    }
}

/// Writes corpus, KG, dataset and backend scripts under dir and returns a run
/// config (as JSON) whose paths point at them.
inline nlohmann::json write_toy_files(const ToyWorld& world, const TempDir& dir) {
    DocumentStore::from_documents(world.docs).save_jsonl(dir.file("corpus.jsonl"));
    world.kg.save(dir.file("kg.jsonl"));
    write_dataset_file(dir.file("dataset.jsonl"), world.dataset);
    write_script_file(dir.file("constructor.json"), world.constructor_script);
    write_script_file(dir.file("reader.json"), world.reader_script, "unknown");
    write_script_file(dir.file("silver_reader.json"), world.silver_reader_script, "unknown");
    write_script_file(dir.file("extractor.json"), world.extractor_script);

    nlohmann::json config;
    config["seed"] = 42;
    config["paths"] = {
        {"corpus", dir.file("corpus.jsonl")},
        {"kg", dir.file("kg.jsonl")},
        {"index", dir.file("index.bin")},
        {"aligner", ""},
        {"training_data", dir.file("training.jsonl")},
        {"dataset", dir.file("dataset.jsonl")},
        {"output_dir", dir.file("out")},
    };
    config["backends"] = {
        {"embedding", {{"kind", "hash"}, {"dim", 256}, {"seed", 7}}},
        {"constructor", {{"kind", "scripted"}, {"path", dir.file("constructor.json")}, {"match", "substring"}}},
        {"reader",
         {{"kind", "scripted"}, {"path", dir.file("reader.json")}, {"match", "substring"}, {"default", "unknown"}}},
        {"extractor", {{"kind", "scripted"}, {"path", dir.file("extractor.json")}, {"match", "substring"}}},
    };
    config["silver"] = {{"negatives", 1}};
    config["eval"] = {{"threads", 2}};
    return config;
}

inline std::string write_config_file(const TempDir& dir, const nlohmann::json& config,
                                     const std::string& name = "config.json") {
    std::ofstream out(dir.file(name), std::ios::binary);
    out << config.dump(2) << "\n";
    return dir.file(name);
}

}  // namespace kirag::testing
