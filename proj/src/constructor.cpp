#include "kirag/constructor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "kirag/corpus.hpp"

namespace kirag {

std::string build_constructor_prompt(const std::string& question, const ReasoningChain& chain,
                                     const std::vector<ScoredUnit>& candidates,
                                     const PromptSet& prompts) {
    if (candidates.empty())
        throw std::invalid_argument("constructor prompt requires nonempty candidates");
    std::string context;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (i > 0) context += ", ";
        context += candidates[i].unit.text;
    }
    std::string chain_text;
    for (size_t i = 0; i < chain.steps.size(); ++i) {
        if (i > 0) chain_text += ",";
        chain_text += chain.steps[i].text;
    }
    return render_prompt(prompts.constructor,
                         {{"context", context}, {"question", question}, {"chain", chain_text}});
}

ParsedChainOutput parse_chain_output(const std::string& text) {
    ParsedChainOutput out;
    out.triples = parse_triples(text, "").triples;

    static const std::string kMarker = "the answer is";
    const std::string lowered = to_lower(text);
    const size_t pos = lowered.find(kMarker);
    if (pos != std::string::npos) {
        std::string answer = trim(text.substr(pos + kMarker.size()));
        if (!answer.empty() && answer.back() == '.') answer.pop_back();
        out.answer = trim(answer);
    }
    return out;
}

const char* to_string(ExtendOutcome::Kind kind) {
    switch (kind) {
        case ExtendOutcome::Kind::Extended: return "extended";
        case ExtendOutcome::Kind::Terminated: return "terminated";
        case ExtendOutcome::Kind::Exhausted: return "exhausted";
    }
    return "unknown";
}

ExtendOutcome extend_chain(const std::string& question, const ReasoningChain& chain,
                           const std::vector<ScoredUnit>& candidates, ChatBackend& chat,
                           const PromptSet& prompts, Granularity granularity) {
    if (chain.terminal()) throw std::invalid_argument("cannot extend a terminal chain");
    if (candidates.empty()) throw std::invalid_argument("extend_chain requires candidates");

    ChatRequest request;
    request.user = build_constructor_prompt(question, chain, candidates, prompts);
    const std::string completion = chat.complete(request).text;
    const ParsedChainOutput parsed = parse_chain_output(completion);

    // Candidate lookup by normalized unit key; first entry wins duplicates.
    std::vector<size_t> fresh;  // candidate indices not already in the chain
    std::unordered_set<std::string> fresh_keys;
    for (size_t i = 0; i < candidates.size(); ++i) {
        const std::string key = candidates[i].unit.key();
        if (chain.contains(key)) continue;
        if (fresh_keys.insert(key).second) fresh.push_back(i);
    }

    const ScoredUnit* matched = nullptr;
    if (granularity == Granularity::Triple) {
        // First generated triple that survives the candidate filter.
        for (const auto& t : parsed.triples) {
            const std::string key = normalized_key(t.wire());
            for (size_t i : fresh) {
                if (candidates[i].unit.key() == key) {
                    matched = &candidates[i];
                    break;
                }
            }
            if (matched) break;
        }
    } else {
        // Units are free text; take the candidate echoed earliest in the
        // completion.
        const std::string haystack = normalized_key(completion);
        size_t best_pos = std::string::npos;
        for (size_t i : fresh) {
            const std::string needle = candidates[i].unit.key();
            if (needle.empty()) continue;
            const size_t at = haystack.find(needle);
            if (at != std::string::npos && at < best_pos) {
                best_pos = at;
                matched = &candidates[i];
            }
        }
    }

    ExtendOutcome outcome;
    if (matched) {
        outcome.kind = ExtendOutcome::Kind::Extended;
        outcome.unit = *matched;
        outcome.via = ExtendOutcome::Via::Generated;
        return outcome;
    }
    if (parsed.answer) {
        outcome.kind = ExtendOutcome::Kind::Terminated;
        outcome.answer = parsed.answer;
        return outcome;
    }
    if (!fresh.empty()) {
        // Entire completion was filtered: fall back to the best unused
        // candidate so the iteration still makes progress.
        size_t best = fresh[0];
        for (size_t i : fresh)
            if (candidates[i].score > candidates[best].score) best = i;
        outcome.kind = ExtendOutcome::Kind::Extended;
        outcome.unit = candidates[best];
        outcome.via = ExtendOutcome::Via::Fallback;
        return outcome;
    }
    outcome.kind = ExtendOutcome::Kind::Exhausted;
    return outcome;
}

}  // namespace kirag
