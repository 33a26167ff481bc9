#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ultraif {

enum class PromptKind {
    Decomposition,
    QuestionGeneration,
    ComposerIO,
    ResponseGeneration,
    ResponseEvaluation,
};

enum class ConstraintCategory {
    Content,
    Numerical,
    Stylistic,
    Format,
    Linguistic,
};

std::string_view to_string(ConstraintCategory category);
std::string_view to_string(PromptKind kind);
ConstraintCategory category_from_string(std::string_view name);

// The template text exactly as checked in under prompts/golden/.
std::string_view template_text(PromptKind kind);

// Placeholder names the template expects, e.g. {"query", "constraint"}.
const std::vector<std::string>& template_slots(PromptKind kind);

// Substitutes every {slot} occurrence in a single pass; slot values are
// inserted literally and never re-scanned, so braces inside values are inert.
// MissingSlot when a template placeholder has no value, UnknownSlot when a
// value names no placeholder. Empty string is a valid value.
std::string render(PromptKind kind, const std::map<std::string, std::string>& slots);

struct DecomposedConstraint {
    ConstraintCategory category;
    std::string constraint;
    std::string simplified_query;
};

struct ParsedDecomposition {
    bool complex = false;
    std::optional<std::string> basic_query;
    std::vector<DecomposedConstraint> constraints;  // flattened, category order fixed
};

struct ParsedComposerOutput {
    std::string augmented_query;
    std::string question;  // may be empty
};

enum class Verdict { Yes, No };

struct QuestionVerdict {
    std::string explanation;
    Verdict score = Verdict::No;
};

struct ParsedVerdicts {
    std::vector<QuestionVerdict> per_question;

    int yes_count() const;
    bool all_yes() const;
};

// All parse_* functions accept arbitrary bytes and either return a value or
// throw ParseFailure; they must never crash (fuzzed). Models often wrap
// their JSON in prose, so the first balanced top-level object is extracted
// before parsing, and Python-style literals (True/False/None, trailing
// commas) are normalized since the decomposition template itself shows them.
ParsedDecomposition parse_decomposition(std::string_view raw);
ParsedComposerOutput parse_composer_output(std::string_view raw);
std::optional<std::string> parse_question(std::string_view raw);
ParsedVerdicts parse_verdicts(std::string_view raw, int expected_count);

std::string serialize_composer_output(const ParsedComposerOutput& out);

// Exposed for tests/fuzzing: locate the first balanced {...} block, or empty.
std::string extract_json_object(std::string_view raw);

}  // namespace ultraif
