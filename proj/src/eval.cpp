#include "kirag/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kirag/util.hpp"

namespace kirag {

using nlohmann::json;

std::vector<EvalExample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::vector<EvalExample> examples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fail = [&](const std::string& msg) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
        };
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) fail("dataset line is not an object");
        EvalExample ex;
        if (!j.contains("question") || !j["question"].is_string() || j["question"].get<std::string>().empty())
            fail("missing or empty \"question\"");
        ex.question = j["question"].get<std::string>();
        if (j.contains("gold_doc_ids")) {
            if (!j["gold_doc_ids"].is_array()) fail("\"gold_doc_ids\" must be an array");
            for (const auto& g : j["gold_doc_ids"]) {
                if (!g.is_string()) fail("\"gold_doc_ids\" entries must be strings");
                ex.gold_doc_ids.push_back(g.get<std::string>());
            }
        }
        if (j.contains("gold_order_known")) {
            if (!j["gold_order_known"].is_boolean()) fail("\"gold_order_known\" must be a boolean");
            ex.gold_order_known = j["gold_order_known"].get<bool>();
        }
        if (!j.contains("answers") || !j["answers"].is_array() || j["answers"].empty())
            fail("missing or empty \"answers\"");
        for (const auto& a : j["answers"]) {
            if (!a.is_string()) fail("\"answers\" entries must be strings");
            ex.answers.push_back(a.get<std::string>());
        }
        examples.push_back(std::move(ex));
    }
    return examples;
}

int per_step_recall(const std::vector<std::string>& ranked_doc_ids,
                    const std::vector<std::string>& ordered_gold, int step, int k) {
    if (step < 1) throw std::invalid_argument("per_step_recall: step must be >= 1");
    if (k < 1) throw std::invalid_argument("per_step_recall: k must be >= 1");
    if (ordered_gold.size() < static_cast<size_t>(step))
        throw std::invalid_argument("per_step_recall: gold has fewer than step entries");
    const std::string& want = ordered_gold[static_cast<size_t>(step) - 1];
    size_t top = std::min(ranked_doc_ids.size(), static_cast<size_t>(k));
    for (size_t i = 0; i < top; ++i)
        if (ranked_doc_ids[i] == want) return 1;
    return 0;
}

int per_step_trace_recall(const RetrievalTrace& trace,
                          const std::vector<std::string>& ordered_gold, int step) {
    if (step < 1) throw std::invalid_argument("per_step_trace_recall: step must be >= 1");
    if (ordered_gold.size() < static_cast<size_t>(step))
        throw std::invalid_argument("per_step_trace_recall: gold has fewer than step entries");
    const std::string& want = ordered_gold[static_cast<size_t>(step) - 1];
    size_t upto = std::min(trace.iterations.size(), static_cast<size_t>(step));
    for (size_t i = 0; i < upto; ++i)
        for (const auto& hit : trace.iterations[i].searched)
            if (hit.doc_id == want) return 1;
    return 0;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string recall_key(int k) { return "R@" + std::to_string(k); }

}  // namespace

EvalReport evaluate_run(const std::vector<EvalExample>& dataset, const PipelineConfig& pipeline_config,
                        const PipelineStores& stores, const EvalOptions& options,
                        const std::string& config_fingerprint) {
    if (dataset.empty()) throw std::invalid_argument("evaluate_run: dataset is empty");
    if (options.recall_ks.empty()) throw std::invalid_argument("evaluate_run: recall_ks is empty");
    for (int k : options.recall_ks)
        if (k < 1) throw std::invalid_argument("evaluate_run: recall_ks entries must be >= 1");
    if (options.per_step_k < 1) throw std::invalid_argument("evaluate_run: per_step_k must be >= 1");
    pipeline_config.validate();
    stores.validate();
    if (options.compute_answers && stores.reader_chat == nullptr)
        throw std::invalid_argument("evaluate_run: compute_answers requires a reader backend");

    int max_k = options.per_step_k;
    for (int k : options.recall_ks) max_k = std::max(max_k, k);
    max_k = std::max(max_k, pipeline_config.final_k);

    EvalReport report;
    report.questions = dataset.size();
    report.config_fingerprint = config_fingerprint;
    report.rows.resize(dataset.size());
    std::vector<RetrievalTrace> traces(options.write_traces ? dataset.size() : 0);

    parallel_for(dataset.size(), options.threads, [&](size_t qi) {
        const EvalExample& ex = dataset[qi];
        EvalRow& row = report.rows[qi];
        row.index = qi;
        row.question = ex.question;
        try {
            RetrievalTrace trace = retrieve(ex.question, pipeline_config, stores);
            auto ranked = ranked_with_fallback(trace, max_k);
            row.iterations = trace.iterations.size();
            row.used_search_fallback = trace.used_search_fallback;
            for (const auto& rd : ranked) row.ranked_doc_ids.push_back(rd.doc_id);

            if (!ex.gold_doc_ids.empty()) {
                for (int k : options.recall_ks) {
                    row.recalls[recall_key(k)] = recall_at_k(row.ranked_doc_ids, ex.gold_doc_ids, k);
                    row.attainable_recalls[recall_key(k)] =
                        static_cast<double>(std::min<size_t>(k, ex.gold_doc_ids.size())) /
                        static_cast<double>(ex.gold_doc_ids.size());
                }
                if (ex.gold_order_known) {
                    for (size_t step = 1; step <= ex.gold_doc_ids.size(); ++step) {
                        row.step_recalls.push_back(per_step_recall(
                            row.ranked_doc_ids, ex.gold_doc_ids, static_cast<int>(step), options.per_step_k));
                        row.step_trace_recalls.push_back(
                            per_step_trace_recall(trace, ex.gold_doc_ids, static_cast<int>(step)));
                    }
                }
            }

            if (options.compute_answers) {
                std::vector<RankedDocument> for_reader = ranked;
                if (for_reader.size() > static_cast<size_t>(pipeline_config.final_k))
                    for_reader.resize(static_cast<size_t>(pipeline_config.final_k));
                row.answer_text =
                    answer(ex.question, for_reader, *stores.documents, *stores.reader_chat, *stores.prompts);
                row.em_value = static_cast<int>(em(row.answer_text, ex.answers));
                row.f1_value = f1(row.answer_text, ex.answers);
            }
            if (options.write_traces) traces[qi] = std::move(trace);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    // Sequential reduce in question order keeps the report deterministic.
    std::map<std::string, double> sums;
    std::map<std::string, size_t> counts;
    auto add = [&](const std::string& key, double v) {
        sums[key] += v;
        counts[key] += 1;
    };
    for (const auto& row : report.rows) {
        if (!row.error.empty()) {
            ++report.failed;
            continue;
        }
        for (const auto& [key, v] : row.recalls) add(key, v);
        if (row.em_value) add("EM", static_cast<double>(*row.em_value));
        if (row.f1_value) add("F1", *row.f1_value);
        if (row.step_recalls.empty() && !dataset[row.index].gold_doc_ids.empty())
            ++report.step_metric_skipped;
        for (size_t s = 0; s < row.step_recalls.size(); ++s) {
            if (row.step_recalls[s])
                add("step-" + std::to_string(s + 1) + " R@" + std::to_string(options.per_step_k),
                    static_cast<double>(*row.step_recalls[s]));
            if (row.step_trace_recalls.size() > s && row.step_trace_recalls[s])
                add("step-" + std::to_string(s + 1) + " searched", static_cast<double>(*row.step_trace_recalls[s]));
        }
    }
    for (const auto& [key, total] : sums)
        report.means[key] = total / static_cast<double>(counts[key]);
    return report;
}

json EvalReport::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["config_fingerprint"] = config_fingerprint;
    j["definitions"] = {
        {"recall_at_k",
         "|gold documents in the top-K of the final ranking| / |gold documents|; the top-K list is the "
         "triple-derived ranking with search fallback when no triples were gathered"},
        {"per_step_recall",
         "1 when the step's gold document appears in the top-k of the final ranking; computed only for "
         "questions with a known hop order"},
        {"per_step_searched", "1 when the step's gold document was returned by dense search by iteration <= step"},
    };
    j["counts"] = {{"questions", questions}, {"failed", failed}, {"step_metric_skipped", step_metric_skipped}};
    j["means"] = json::object();
    for (const auto& [key, v] : means) j["means"][key] = v;
    j["rows"] = json::array();
    for (const auto& row : rows) {
        json r;
        r["index"] = row.index;
        r["question"] = row.question;
        r["ranked_doc_ids"] = row.ranked_doc_ids;
        r["recalls"] = json::object();
        for (const auto& [key, v] : row.recalls) r["recalls"][key] = v;
        r["attainable_recalls"] = json::object();
        for (const auto& [key, v] : row.attainable_recalls) r["attainable_recalls"][key] = v;
        r["step_recalls"] = json::array();
        for (const auto& v : row.step_recalls) r["step_recalls"].push_back(v ? json(*v) : json(nullptr));
        r["step_trace_recalls"] = json::array();
        for (const auto& v : row.step_trace_recalls)
            r["step_trace_recalls"].push_back(v ? json(*v) : json(nullptr));
        r["em"] = row.em_value ? json(*row.em_value) : json(nullptr);
        r["f1"] = row.f1_value ? json(*row.f1_value) : json(nullptr);
        r["answer"] = row.answer_text;
        r["iterations"] = row.iterations;
        r["used_search_fallback"] = row.used_search_fallback;
        r["error"] = row.error;
        j["rows"].push_back(std::move(r));
    }
    return j;
}

std::string EvalReport::to_markdown() const {
    std::ostringstream out;
    out << "# Evaluation report\n\n";
    out << "Config fingerprint: `" << config_fingerprint << "`\n\n";
    out << "Recall@K counts a gold document as recalled when it appears in the top-K of the final\n"
           "document ranking (triple-derived, with dense-search fallback when no triples were\n"
           "gathered); the per-question score is |gold in top-K| / |gold|. Per-step recall is 1 when\n"
           "the step's gold document is in the top-k of the final ranking and is computed only for\n"
           "questions whose hop order is known. Rows with errors are excluded from the means.\n\n";
    out << "- questions: " << questions << "\n";
    out << "- failed: " << failed << "\n";
    out << "- step metric skipped: " << step_metric_skipped << "\n\n";
    out << "| metric | mean |\n|---|---|\n";
    for (const auto& [key, v] : means) out << "| " << key << " | " << format_double(v) << " |\n";
    out << "\n## Questions\n\n";
    out << "| # | question | recalls | EM | F1 | iterations | fallback | error |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& row : rows) {
        std::string recalls;
        for (const auto& [key, v] : row.recalls) {
            if (!recalls.empty()) recalls += ", ";
            recalls += key + "=" + format_double(v);
        }
        std::string q = row.question;
        if (q.size() > 60) q = q.substr(0, 57) + "...";
        out << "| " << row.index << " | " << q << " | " << recalls << " | "
            << (row.em_value ? std::to_string(*row.em_value) : std::string("-")) << " | "
            << (row.f1_value ? format_double(*row.f1_value) : std::string("-")) << " | " << row.iterations
            << " | " << (row.used_search_fallback ? "yes" : "no") << " | " << row.error << " |\n";
    }
    return out.str();
}

void write_report(const EvalReport& report, const std::string& out_dir,
                  const std::vector<RetrievalTrace>* traces) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "report.json", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write report.json in " + out_dir);
        out << report.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "report.md", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write report.md in " + out_dir);
        out << report.to_markdown();
    }
    if (traces != nullptr && !traces->empty()) {
        fs::path trace_dir = fs::path(out_dir) / "traces";
        fs::create_directories(trace_dir);
        for (size_t i = 0; i < traces->size(); ++i) {
            if ((*traces)[i].question.empty()) continue;  // failed question, no trace
            std::ofstream out(trace_dir / ("q" + std::to_string(i) + ".json"), std::ios::binary);
            out << trace_to_json((*traces)[i]).dump(2) << "\n";
        }
    }
}

}  // namespace kirag
