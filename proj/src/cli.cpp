#include "kirag/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "kirag/config.hpp"
#include "kirag/eval.hpp"
#include "kirag/service.hpp"
#include "kirag/util.hpp"

namespace kirag {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ';';
    return s;
}

void ensure_parent_dir(const std::string& path) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

int cmd_extract(const RunConfig& config) {
    if (config.paths.corpus.empty()) throw std::runtime_error("config: paths.corpus is required");
    if (config.paths.kg.empty()) throw std::runtime_error("config: paths.kg is required");
    DocumentStore store =
        DocumentStore::load_jsonl(config.paths.corpus, config.extraction.keep_first_duplicate);
    PromptSet prompts = PromptSet::with_overrides(
        config.paths.prompt_extraction.empty() ? std::nullopt
                                               : std::optional<std::string>(config.paths.prompt_extraction),
        std::nullopt, std::nullopt);
    auto chat = make_chat_backend(config.extractor_chat, "extractor");

    KgCorpus kg;
    if (fs::exists(config.paths.kg)) kg = KgCorpus::load(config.paths.kg);
    size_t resumed = kg.size();

    // Append new entries as they land so an interrupted run resumes from the
    // cache; the final save rewrites the file sorted and deduplicated.
    ensure_parent_dir(config.paths.kg);
    std::ofstream append(config.paths.kg, std::ios::app | std::ios::binary);
    if (!append) throw std::runtime_error("cannot open for append: " + config.paths.kg);
    auto on_entry = [&](const std::string& doc_id, const KgEntry& entry) {
        append << KgCorpus::entry_to_line(doc_id, entry) << "\n";
        append.flush();
    };

    ExtractCorpusStats stats =
        extract_corpus(store, *chat, kg, prompts, config.extraction.threads, on_entry);
    append.close();
    kg.save(config.paths.kg);
    std::cout << "extract: total=" << stats.total << " extracted=" << stats.extracted
              << " cached=" << stats.cached << " resumed=" << resumed
              << " malformed_spans=" << stats.malformed_spans
              << " zero_triple_docs=" << stats.zero_triple_docs << "\n";
    std::cout << "saved knowledge corpus to " << config.paths.kg << " (" << kg.size() << " documents, "
              << kg.triple_count() << " triples)\n";
    return 0;
}

int cmd_index(const RunConfig& config) {
    if (config.paths.corpus.empty()) throw std::runtime_error("config: paths.corpus is required");
    if (config.paths.index.empty()) throw std::runtime_error("config: paths.index is required");
    DocumentStore store =
        DocumentStore::load_jsonl(config.paths.corpus, config.extraction.keep_first_duplicate);
    auto embedding = make_embedding_backend(config);
    DenseIndex index = DenseIndex::build(store.docs(), *embedding, config.prefixes);
    ensure_parent_dir(config.paths.index);
    index.save(config.paths.index);
    std::cout << "indexed " << index.size() << " documents (dim=" << index.dim() << ") to "
              << config.paths.index << "\n";
    return 0;
}

int cmd_build_silver(const RunConfig& config) {
    if (config.paths.dataset.empty()) throw std::runtime_error("config: paths.dataset is required");
    if (config.paths.kg.empty() || !fs::exists(config.paths.kg))
        throw std::runtime_error("knowledge corpus not found: " + config.paths.kg +
                                 " (run the extract command first)");
    if (config.paths.training_data.empty())
        throw std::runtime_error("config: paths.training_data is required");
    auto dataset = load_dataset(config.paths.dataset);
    KgCorpus kg = KgCorpus::load(config.paths.kg);
    PromptSet prompts = PromptSet::with_overrides(
        std::nullopt, std::nullopt,
        config.paths.prompt_reader.empty() ? std::nullopt
                                           : std::optional<std::string>(config.paths.prompt_reader));
    auto reader = make_chat_backend(config.reader_chat, "reader");

    std::vector<TrainingExample> all;
    size_t kept = 0, filtered = 0;
    for (const auto& ex : dataset) {
        auto examples =
            build_silver_data(ex.question, ex.gold_doc_ids, ex.answers, *reader, kg, prompts, config.silver);
        if (examples) {
            ++kept;
            all.insert(all.end(), examples->begin(), examples->end());
        } else {
            ++filtered;
        }
    }
    ensure_parent_dir(config.paths.training_data);
    save_training_data(config.paths.training_data, all);
    std::cout << "build-silver: questions=" << dataset.size() << " kept=" << kept
              << " filtered=" << filtered << " examples=" << all.size() << "\n";
    std::cout << "saved training data to " << config.paths.training_data << "\n";
    return 0;
}

int cmd_train(const RunConfig& config) {
    if (config.paths.training_data.empty())
        throw std::runtime_error("config: paths.training_data is required");
    if (config.paths.aligner.empty()) throw std::runtime_error("config: paths.aligner is required");
    auto examples = load_training_data(config.paths.training_data);
    if (examples.empty()) throw std::runtime_error("training data is empty: " + config.paths.training_data);
    auto embedding = make_embedding_backend(config);
    AlignerModel model(embedding, config.prefixes);
    double before = top1_accuracy(model, examples);
    TrainResult result = train_aligner(model, examples, config.training);
    double after = top1_accuracy(model, examples);
    for (size_t e = 0; e < result.epoch_losses.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", result.epoch_losses[e]);
        std::cout << "epoch " << (e + 1) << "/" << result.epoch_losses.size() << " loss " << buf << "\n";
    }
    char acc[96];
    std::snprintf(acc, sizeof(acc), "top1 accuracy %.4f -> %.4f", before, after);
    std::cout << "train: examples=" << examples.size() << " steps=" << result.steps << " " << acc << "\n";
    ensure_parent_dir(config.paths.aligner);
    model.save(config.paths.aligner, config.fingerprint());
    std::cout << "saved aligner to " << config.paths.aligner << "\n";
    return 0;
}

int cmd_retrieve(const RunConfig& config, const std::string& question, int k,
                 const std::string& trace_path) {
    Engine engine = load_engine(config);
    PipelineStores stores = engine.stores();
    RetrievalTrace trace = retrieve(question, config.pipeline, stores);
    trace.config_fingerprint = engine.config_fingerprint;
    json payload = retrieval_payload(trace, k > 0 ? k : config.pipeline.final_k);
    if (!trace_path.empty()) {
        ensure_parent_dir(trace_path);
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write trace: " + trace_path);
        out << trace_to_json(trace).dump(2) << "\n";
    }
    std::cout << payload.dump() << "\n";
    return 0;
}

int cmd_answer(const RunConfig& config, const std::string& question, int k) {
    Engine engine = load_engine(config, {.reader = true});
    PipelineStores stores = engine.stores();
    RetrievalTrace trace = retrieve(question, config.pipeline, stores);
    trace.config_fingerprint = engine.config_fingerprint;
    json payload = retrieval_payload(trace, k > 0 ? k : config.pipeline.final_k);
    auto ranked = ranked_with_fallback(trace, config.pipeline.final_k);
    std::string text = answer(question, ranked, engine.documents, *engine.reader_chat, engine.prompts);
    json out;
    out["answer"] = text;
    out["documents"] = payload["documents"];
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& config) {
    if (config.paths.dataset.empty()) throw std::runtime_error("config: paths.dataset is required");
    Engine engine = load_engine(config, {.reader = config.eval.compute_answers});
    auto dataset = load_dataset(config.paths.dataset);
    PipelineStores stores = engine.stores();
    EvalReport report =
        evaluate_run(dataset, config.pipeline, stores, config.eval, engine.config_fingerprint);
    write_report(report, config.paths.output_dir);
    std::cout << "eval: questions=" << report.questions << " failed=" << report.failed << "\n";
    for (const auto& [key, v] : report.means) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        std::cout << "  " << key << " = " << buf << "\n";
    }
    std::cout << "report written to " << config.paths.output_dir << "\n";
    return 0;
}

int cmd_serve(const RunConfig& config, const std::string& host, int port) {
    Engine engine = load_engine(config);
    RetrievalService service(engine);
    std::cout << "serving on " << host << ":" << port << "\n";
    service.run(host, port);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"kirag: knowledge-driven iterative retrieval"};
    app.require_subcommand(1);

    std::string config_path;
    std::string question;
    std::string trace_path;
    std::string host = "127.0.0.1";
    int k = 0;
    int port = 8080;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    };

    CLI::App* extract = app.add_subcommand("extract", "extract knowledge triples for the corpus");
    add_config(extract);
    CLI::App* index = app.add_subcommand("index", "build the dense document index");
    add_config(index);
    CLI::App* silver = app.add_subcommand("build-silver", "build silver training data from a QA dataset");
    add_config(silver);
    CLI::App* train = app.add_subcommand("train", "train the aligner on saved training data");
    add_config(train);
    CLI::App* retrieve_cmd = app.add_subcommand("retrieve", "retrieve documents for one question");
    add_config(retrieve_cmd);
    retrieve_cmd->add_option("--question", question, "the question")->required();
    retrieve_cmd->add_option("--k", k, "documents to return (default: pipeline final_k)");
    retrieve_cmd->add_option("--trace", trace_path, "write the full retrieval trace to this file");
    CLI::App* answer_cmd = app.add_subcommand("answer", "retrieve and answer one question");
    add_config(answer_cmd);
    answer_cmd->add_option("--question", question, "the question")->required();
    answer_cmd->add_option("--k", k, "documents to report (default: pipeline final_k)");
    CLI::App* eval_cmd = app.add_subcommand("eval", "run retrieval evaluation over a dataset");
    add_config(eval_cmd);
    CLI::App* serve = app.add_subcommand("serve", "serve retrieval over HTTP");
    add_config(serve);
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "bind port");

    std::vector<const char*> argv;
    argv.push_back("kirag");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        RunConfig config = RunConfig::load(config_path);
        if (app.got_subcommand(extract)) return cmd_extract(config);
        if (app.got_subcommand(index)) return cmd_index(config);
        if (app.got_subcommand(silver)) return cmd_build_silver(config);
        if (app.got_subcommand(train)) return cmd_train(config);
        if (app.got_subcommand(retrieve_cmd)) return cmd_retrieve(config, question, k, trace_path);
        if (app.got_subcommand(answer_cmd)) return cmd_answer(config, question, k);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(config);
        if (app.got_subcommand(serve)) return cmd_serve(config, host, port);
    } catch (const std::exception& e) {
        std::cerr << "error: " << one_line(e.what()) << "\n";
        return 1;
    }
    std::cerr << "usage error: no subcommand\n";
    return 2;
}

}  // namespace kirag
