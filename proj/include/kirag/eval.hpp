#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kirag/metrics.hpp"
#include "kirag/pipeline.hpp"

namespace kirag {

struct EvalExample {
    std::string question;
    std::vector<std::string> gold_doc_ids;  // hop order when gold_order_known
    bool gold_order_known = false;
    std::vector<std::string> answers;
};

/// Line-delimited JSON {"question", "gold_doc_ids", "gold_order_known",
/// "answers"}; malformed lines raise an error naming the line number.
std::vector<EvalExample> load_dataset(const std::string& path);

/// 1 iff the gold document of the given step (1-based) is in the top-k of the
/// final ranking. Requires ordered gold with at least `step` entries; callers
/// skip questions whose order is unknown.
int per_step_recall(const std::vector<std::string>& ranked_doc_ids,
                    const std::vector<std::string>& ordered_gold, int step, int k);

/// Supplementary trace-based variant: 1 iff the step's gold document was
/// searched by iteration <= step.
int per_step_trace_recall(const RetrievalTrace& trace,
                          const std::vector<std::string>& ordered_gold, int step);

struct EvalOptions {
    std::vector<int> recall_ks = {3, 5};
    int per_step_k = 3;
    bool compute_answers = true;
    unsigned threads = 1;
    bool write_traces = false;
};

struct EvalRow {
    size_t index = 0;
    std::string question;
    std::vector<std::string> ranked_doc_ids;
    std::map<std::string, double> recalls;             // "R@3" -> value
    std::map<std::string, double> attainable_recalls;  // "R@3" -> max reachable
    std::vector<std::optional<int>> step_recalls;       // index 0 = step 1
    std::vector<std::optional<int>> step_trace_recalls;
    std::optional<int> em_value;
    std::optional<double> f1_value;
    std::string answer_text;
    size_t iterations = 0;
    bool used_search_fallback = false;
    std::string error;  // nonempty rows are excluded from means
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::map<std::string, double> means;
    size_t questions = 0;
    size_t failed = 0;
    size_t step_metric_skipped = 0;  // questions without usable hop order
    std::string config_fingerprint;

    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

/// Runs the full pipeline per question (parallel pool), computes metrics, and
/// aggregates. Per-question failures are recorded on the row and excluded
/// from means. Deterministic for fixed config and scripted backends; no
/// timestamps anywhere.
EvalReport evaluate_run(const std::vector<EvalExample>& dataset, const PipelineConfig& pipeline_config,
                        const PipelineStores& stores, const EvalOptions& options,
                        const std::string& config_fingerprint);

/// Writes report.json and report.md (plus traces/q{index}.json when
/// requested) into out_dir.
void write_report(const EvalReport& report, const std::string& out_dir,
                  const std::vector<RetrievalTrace>* traces = nullptr);

}  // namespace kirag
