#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kirag/backends.hpp"
#include "kirag/prompts.hpp"
#include "kirag/types.hpp"

namespace kirag {

/// Candidate units joined ", " fill the Context line; the current chain
/// joined "," fills the Thought line (empty chain leaves "Thought: ").
std::string build_constructor_prompt(const std::string& question, const ReasoningChain& chain,
                                     const std::vector<ScoredUnit>& candidates,
                                     const PromptSet& prompts);

struct ParsedChainOutput {
    std::vector<KnowledgeTriple> triples;  // order of appearance; empty source ids
    std::optional<std::string> answer;
};

/// Triples via the corpus grammar; answer is the text after the first
/// case-insensitive "the answer is", whitespace-trimmed with one trailing
/// period stripped.
ParsedChainOutput parse_chain_output(const std::string& text);

struct ExtendOutcome {
    enum class Kind { Extended, Terminated, Exhausted };
    enum class Via { Generated, Fallback };

    Kind kind = Kind::Exhausted;
    std::optional<ScoredUnit> unit;     // Extended: the matched candidate
    Via via = Via::Generated;           // Extended: how the unit was chosen
    std::optional<std::string> answer;  // Terminated
};

const char* to_string(ExtendOutcome::Kind kind);

/// One chat call per invocation. Generated triples (or, in unit granularity,
/// echoed unit texts) are matched against the candidates by normalized
/// equality; hallucinations and chain duplicates are dropped. First surviving
/// unit extends the chain; otherwise an answer marker terminates; otherwise
/// the top-scored unused candidate is the fallback; Exhausted only when every
/// candidate is already in the chain.
ExtendOutcome extend_chain(const std::string& question, const ReasoningChain& chain,
                           const std::vector<ScoredUnit>& candidates, ChatBackend& chat,
                           const PromptSet& prompts,
                           Granularity granularity = Granularity::Triple);

}  // namespace kirag
