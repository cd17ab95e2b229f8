#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kirag {

// Versioned prompt templates, embedded as defaults and overridable from text
// files. Placeholders use {name} syntax and are substituted in a single
// left-to-right pass, so substituted values are never re-scanned.

inline constexpr int kPromptVersion = 1;

inline constexpr std::string_view kExtractionPromptTemplate =
    "Instruction: You are a knowledge graph constructor tasked with extracting knowledge "
    "triples in the form of <head entity; relation; tail entity> from a document. Each triple "
    "denotes a specific relationship between entities or an event. The head entity and tail "
    "entity can be the provided title or phrases in the text. If multiple tail entities share "
    "the same relation with a head entity, aggregate these tail entities using commas. Format "
    "your output in the form of <head entity; relation; tail entity>.\n"
    "\n"
    "Examples:\n"
    "\n"
    "Title: Dana Blankstein\n"
    "Text: Dana Blankstein- Cohen( born March 3, 1981) is the director of the Israeli Academy "
    "of Film and Television. She is a film director, and an Israeli culture entrepreneur.\n"
    "Knowledge Triples: <Dana Blankstein; full name; Dana Blankstein-Cohen>, "
    "<Dana Blankstein; birth date; March 3, 1981>, <Dana Blankstein; nationality; Israeli>, "
    "<Dana Blankstein; position; director of the Israeli Academy of Film and Television>, "
    "<Dana Blankstein; profession; film director, culture entrepreneur>\n"
    "\n"
    "Inputs:\n"
    "\n"
    "Title: {title}\n"
    "Text: {text}\n"
    "Knowledge Triples:";

inline constexpr std::string_view kConstructorPromptTemplate =
    "Instruction: Follow the examples to answer the input question by reasoning step-by-step. "
    "Output both reasoning steps and the answer.\n"
    "\n"
    "Examples:\n"
    "\n"
    "Question: Consider the racer for whom the bend at the 26th Milestone, Isle of Man is "
    "dedicated. When were they born?\n"
    "Thought: <26th Milestone, Isle of Man; named after; Joey Dunlop>,<Joey Dunlop; date of "
    "birth; 25 February 1952>. So the answer is 25 February 1952.\n"
    "\n"
    "Inputs:\n"
    "\n"
    "Context: {context}\n"
    "Question: {question}\n"
    "Thought: {chain}";

inline constexpr std::string_view kReaderPromptTemplate =
    "Instruction: Given some context and a question, please only output the answer to the "
    "question.\n"
    "\n"
    "Inputs:\n"
    "\n"
    "Context: {context}\n"
    "Question: {question}\n"
    "Answer:";

/// Substitutes {key} placeholders. Unknown placeholders are left verbatim;
/// substituted values are not re-scanned.
std::string render_prompt(std::string_view tpl,
                          const std::vector<std::pair<std::string, std::string>>& subs);

/// 16-hex-digit fingerprint of a template (or any prompt text).
std::string prompt_fingerprint(std::string_view text);

struct PromptSet {
    std::string extraction{kExtractionPromptTemplate};
    std::string constructor{kConstructorPromptTemplate};
    std::string reader{kReaderPromptTemplate};

    /// Replaces individual templates from override files where a path is set.
    static PromptSet with_overrides(const std::optional<std::string>& extraction_path,
                                    const std::optional<std::string>& constructor_path,
                                    const std::optional<std::string>& reader_path);
};

std::string read_text_file(const std::string& path);

}  // namespace kirag
