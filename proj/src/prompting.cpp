#include "ultraif/prompting.hpp"

#include <algorithm>
#include <cctype>

#include "ultraif/errors.hpp"
#include "ultraif/jsonl.hpp"

namespace ultraif {

namespace {

// Embedded copies of prompts/golden/*.txt. Tests enforce byte equality with
// the files; any edit must happen in both places.

constexpr std::string_view kDecompositionTemplate =
    R"TPL(You are an expert in extracting instruction constraints from a given query.
Definition of Constraint: The smallest unit of restriction or requirement that the instruction imposes on the task.

Query: {query}

- If the query is not a question, or is simple or straightforward without any constraints, please only respond with the following JSON, indicating that no constraints are present.

{
    "Complex": False
}

- If constraints are present, follow these steps:
    1. Identify the Basic Query: Clearly understand the primary goal of the query, stripping away any constraints. The Basic Query should be the essential task without any added conditions or restrictions.
    2. Extract and Categorize Constraints: Identify and classify constraints based on the following types:
        - Content Constraints:
            - Specific Terms or Symbols: Mandatory use of certain terms or symbols with their exact placement (e.g., must include the word 'beautiful').
            - Required Elements or Concepts: Mandates for including specific elements or concepts in responses, reflecting a scenario or object (e.g., highlights the Great Wall).
            - Thematic Directives: Instructions related to thematic content, perspective, or tone, emphasizing response significance (e.g., write a poem about London).
        - Numerical Constraints:
            - Constraints on quantities related to the content, such as the number of points, sentences, paragraphs, response length, or examples (e.g., within a single paragraph with three sentences).
        - Stylistic Constraints:
            - Desired tone and style for the response (e.g., formal, informal, conversational).
            - Specific language or terminology to be used or avoided (e.g., encyclopedic style).
        - Format Constraints:
            - Required structure or format for the response (e.g., list, JSON, bullet points, Java language).
            - Presentation styles or formatting requirements (e.g., electronic medical record format).
        - Linguistic Constraints:
            - Language use in specific contexts, such as discourse, dialects, sociolects, and language policies (e.g., in English).
            - Sentence structure, including phrases, constituents, and the use of imperatives (e.g., with nouns and verbs).
            - Internal structure of words, including roots, affixes, and morphological changes (e.g., lowercase, single-rhyme).
    3. Response Format:
        - Do not consider details that are part of the content itself, such as those used in descriptions, scenarios, or examples, unless they directly impose a restriction of the response.
        - The Basic Query should represent the query’s core goal, free from any constraints.
        - Ensure that extracted constraints do not overlap with the Basic Query.
        - Present each constraint as a dictionary within a list, where each dictionary contains:
            - 'constraint': The specific restriction or requirement.
            - 'simplified query': The query after removing this constraint, polished for coherence and correctness.
        - Exclude any constraint types not present in the query.

{
    "Complex": True,
    "Basic Query": ...,
    "Content Constraints": [
        {
            "constraint": "...",
            "simplified query": "..."
        },
        {
            "constraint": "...",
            "simplified query": "..."
        },
    ],
    ...
}

Please only provide the response in JSON format.)TPL";

constexpr std::string_view kQuestionGenerationTemplate =
    R"TPL(You are an expert in crafting questions to evaluate whether a response to a query adheres to specific constraints.

For the given constraint, please design a question that human evaluators can use to assess if the response meets the specified constraint. The question should focus solely on the given constraint and not other constraints present in the original query.

Specifically, if the given constraint is meaningless or is a part of the content itself, such as those used in descriptions, scenarios, or examples, you can respond with an empty string.

Query: {query}
Constraint: {constraint}

Please design a question for the specified constraint for the given query, and respond in the JSON format without explanation.

{
    "question": "string",
})TPL";

constexpr std::string_view kComposerTemplate =
    R"TPL([history]: {history}
[initial query]: {initial_query})TPL";

constexpr std::string_view kResponseGenerationTemplate =
    R"TPL(You are an expert tasked with answering the given query. Please provide a clear and concise response directly, without introductory phrases such as 'What a great question,' 'Here is the answer,' or similar expressions. Focus solely on addressing the query.

Now please answer the given query while strictly following its inside constraints.

[Query] {query})TPL";

constexpr std::string_view kResponseEvaluationTemplate =
    R"TPL(You are an expert that is good at judging whether the response to a given query meets the specified evaluator questions.
Your task is to carefully examine the response to determine if it adheres to each requirement outlined in the evaluator questions.

[Query] {query}
[Response] {response}
[Evaluator Question] {question}

For each question, please provide a justification for your evaluation, explaining how the response does or does not satisfy the criteria and a score ('YES' or 'NO') indicating whether the answer satisfies each constraint.

You should only respond in the following JSON format:

{
    "Question 1": {
        "explanation": "",
        "score": "YES" or "NO"
    },
    "Question 2": {
        "explanation": "",
        "score": "YES" or "NO"
    },
})TPL";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Rewrites Python-ish JSON into strict JSON: True/False/None become their
// JSON spellings and trailing commas before } or ] are dropped. String
// bodies are left exactly as written. The decomposition template itself
// displays `"Complex": False` and a trailing comma, so models copy both.
std::string normalize_jsonish(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_string = false;
    bool escaped = false;

    auto is_word = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            out.push_back(c);
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out.push_back(c);
            continue;
        }
        if (is_word(c) && (i == 0 || !is_word(text[i - 1]))) {
            static constexpr std::pair<std::string_view, std::string_view> kWords[] = {
                {"True", "true"}, {"False", "false"}, {"None", "null"}};
            bool replaced = false;
            for (const auto& [from, to] : kWords) {
                if (text.substr(i, from.size()) == from &&
                    (i + from.size() == text.size() || !is_word(text[i + from.size()]))) {
                    out.append(to);
                    i += from.size() - 1;
                    replaced = true;
                    break;
                }
            }
            if (replaced) continue;
        }
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j < text.size() && (text[j] == '}' || text[j] == ']')) {
                continue;  // trailing comma
            }
        }
        out.push_back(c);
    }
    return out;
}

json parse_object_or_fail(std::string_view raw, const char* what) {
    std::string block = extract_json_object(raw);
    if (block.empty()) {
        throw ParseFailure(std::string(what) + ": no JSON object found in model output");
    }
    json j = json::parse(normalize_jsonish(block), nullptr, false);
    if (j.is_discarded()) {
        throw ParseFailure(std::string(what) + ": extracted block is not valid JSON");
    }
    if (!j.is_object()) {
        throw ParseFailure(std::string(what) + ": extracted JSON is not an object");
    }
    return j;
}

// Case-insensitive object lookup; returns nullptr when absent.
const json* find_key(const json& obj, std::string_view name) {
    if (auto it = obj.find(name); it != obj.end()) return &*it;
    std::string want = lower(name);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (lower(it.key()) == want) return &it.value();
    }
    return nullptr;
}

const std::vector<std::string>& slots_for(PromptKind kind) {
    static const std::vector<std::string> kDecomposition{"query"};
    static const std::vector<std::string> kQuestionGen{"query", "constraint"};
    static const std::vector<std::string> kComposer{"history", "initial_query"};
    static const std::vector<std::string> kResponseGen{"query"};
    static const std::vector<std::string> kResponseEval{"query", "response", "question"};
    switch (kind) {
        case PromptKind::Decomposition: return kDecomposition;
        case PromptKind::QuestionGeneration: return kQuestionGen;
        case PromptKind::ComposerIO: return kComposer;
        case PromptKind::ResponseGeneration: return kResponseGen;
        case PromptKind::ResponseEvaluation: return kResponseEval;
    }
    throw Error("unreachable prompt kind");
}

}  // namespace

std::string_view to_string(ConstraintCategory category) {
    switch (category) {
        case ConstraintCategory::Content: return "Content";
        case ConstraintCategory::Numerical: return "Numerical";
        case ConstraintCategory::Stylistic: return "Stylistic";
        case ConstraintCategory::Format: return "Format";
        case ConstraintCategory::Linguistic: return "Linguistic";
    }
    throw Error("unreachable constraint category");
}

std::string_view to_string(PromptKind kind) {
    switch (kind) {
        case PromptKind::Decomposition: return "decomposition";
        case PromptKind::QuestionGeneration: return "question_generation";
        case PromptKind::ComposerIO: return "composer";
        case PromptKind::ResponseGeneration: return "response_generation";
        case PromptKind::ResponseEvaluation: return "response_evaluation";
    }
    throw Error("unreachable prompt kind");
}

ConstraintCategory category_from_string(std::string_view name) {
    std::string key = lower(trim(name));
    // Headings come back with or without the " Constraints" suffix.
    constexpr std::string_view kSuffix = " constraints";
    if (key.size() > kSuffix.size() && std::string_view(key).substr(key.size() - kSuffix.size()) == kSuffix) {
        key.resize(key.size() - kSuffix.size());
    }
    if (key == "content") return ConstraintCategory::Content;
    if (key == "numerical") return ConstraintCategory::Numerical;
    if (key == "stylistic") return ConstraintCategory::Stylistic;
    if (key == "format") return ConstraintCategory::Format;
    if (key == "linguistic") return ConstraintCategory::Linguistic;
    throw ParseFailure("unknown constraint category: '" + std::string(name) + "'");
}

std::string_view template_text(PromptKind kind) {
    switch (kind) {
        case PromptKind::Decomposition: return kDecompositionTemplate;
        case PromptKind::QuestionGeneration: return kQuestionGenerationTemplate;
        case PromptKind::ComposerIO: return kComposerTemplate;
        case PromptKind::ResponseGeneration: return kResponseGenerationTemplate;
        case PromptKind::ResponseEvaluation: return kResponseEvaluationTemplate;
    }
    throw Error("unreachable prompt kind");
}

const std::vector<std::string>& template_slots(PromptKind kind) {
    return slots_for(kind);
}

std::string render(PromptKind kind, const std::map<std::string, std::string>& slots) {
    const auto& registry = slots_for(kind);
    for (const auto& [name, value] : slots) {
        (void)value;
        if (std::find(registry.begin(), registry.end(), name) == registry.end()) {
            throw UnknownSlot("template '" + std::string(to_string(kind)) + "' has no slot '" + name + "'");
        }
    }
    for (const auto& name : registry) {
        if (!slots.contains(name)) {
            throw MissingSlot("slot '" + name + "' not supplied for template '" +
                              std::string(to_string(kind)) + "'");
        }
    }

    std::string_view tpl = template_text(kind);
    std::string out;
    out.reserve(tpl.size() + 256);
    std::size_t i = 0;
    while (i < tpl.size()) {
        char c = tpl[i];
        if (c == '{') {
            bool substituted = false;
            for (const auto& name : registry) {
                if (tpl.size() - i >= name.size() + 2 && tpl[i + 1 + name.size()] == '}' &&
                    tpl.substr(i + 1, name.size()) == name) {
                    out.append(slots.at(name));
                    i += name.size() + 2;
                    substituted = true;
                    break;
                }
            }
            if (substituted) continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

int ParsedVerdicts::yes_count() const {
    return static_cast<int>(std::count_if(per_question.begin(), per_question.end(),
                                          [](const QuestionVerdict& v) { return v.score == Verdict::Yes; }));
}

bool ParsedVerdicts::all_yes() const {
    return yes_count() == static_cast<int>(per_question.size());
}

std::string extract_json_object(std::string_view raw) {
    std::size_t start = raw.find('{');
    while (start != std::string_view::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            char c = raw[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    return std::string(raw.substr(start, i - start + 1));
                }
            }
        }
        // Unbalanced from this '{'; try the next one (covers prose like
        // "output {x} follows: {...real json...}").
        start = raw.find('{', start + 1);
    }
    return {};
}

ParsedDecomposition parse_decomposition(std::string_view raw) {
    json j = parse_object_or_fail(raw, "decomposition");

    const json* complex_flag = find_key(j, "Complex");
    if (!complex_flag || !complex_flag->is_boolean()) {
        throw ParseFailure("decomposition: missing or non-boolean 'Complex'");
    }

    ParsedDecomposition result;
    result.complex = complex_flag->get<bool>();
    if (!result.complex) {
        return result;  // extras are ignored; a simple query carries nothing
    }

    if (const json* basic = find_key(j, "Basic Query")) {
        if (!basic->is_string()) {
            throw ParseFailure("decomposition: 'Basic Query' is not a string");
        }
        result.basic_query = basic->get<std::string>();
    }

    // Fixed flattening order keeps downstream triple indices stable no
    // matter how the model ordered its keys.
    static constexpr ConstraintCategory kOrder[] = {
        ConstraintCategory::Content, ConstraintCategory::Numerical, ConstraintCategory::Stylistic,
        ConstraintCategory::Format, ConstraintCategory::Linguistic};

    // Every key must be accounted for: Complex, Basic Query, or a known
    // category heading. Anything else is an unknown category.
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = lower(trim(it.key()));
        if (key == "complex" || key == "basic query") continue;
        category_from_string(it.key());  // throws on unknown
    }

    for (ConstraintCategory cat : kOrder) {
        const json* list = find_key(j, std::string(to_string(cat)) + " Constraints");
        if (!list) list = find_key(j, to_string(cat));
        if (!list) continue;
        if (!list->is_array()) {
            throw ParseFailure("decomposition: category '" + std::string(to_string(cat)) +
                               "' is not a list");
        }
        for (const json& item : *list) {
            if (!item.is_object()) {
                throw ParseFailure("decomposition: constraint entry is not an object");
            }
            const json* constraint = find_key(item, "constraint");
            const json* simplified = find_key(item, "simplified query");
            if (!constraint || !constraint->is_string() || constraint->get<std::string>().empty()) {
                throw ParseFailure("decomposition: missing 'constraint' text");
            }
            if (!simplified || !simplified->is_string() || simplified->get<std::string>().empty()) {
                throw ParseFailure("decomposition: missing 'simplified query' text");
            }
            result.constraints.push_back(
                {cat, constraint->get<std::string>(), simplified->get<std::string>()});
        }
    }

    if (result.constraints.empty()) {
        throw ParseFailure("decomposition: 'Complex' is true but no constraints were given");
    }
    return result;
}

ParsedComposerOutput parse_composer_output(std::string_view raw) {
    json j = parse_object_or_fail(raw, "composer output");
    const json* augmented = find_key(j, "augmented query");
    const json* question = find_key(j, "question");
    if (!augmented || !augmented->is_string()) {
        throw ParseFailure("composer output: missing 'augmented query'");
    }
    if (!question || !question->is_string()) {
        throw ParseFailure("composer output: missing 'question'");
    }
    ParsedComposerOutput out{augmented->get<std::string>(), question->get<std::string>()};
    if (out.augmented_query.empty()) {
        throw ParseFailure("composer output: 'augmented query' is empty");
    }
    return out;
}

std::optional<std::string> parse_question(std::string_view raw) {
    json j = parse_object_or_fail(raw, "question");
    const json* question = find_key(j, "question");
    if (!question || !question->is_string()) {
        throw ParseFailure("question: missing 'question' string");
    }
    std::string text = question->get<std::string>();
    if (text.empty()) return std::nullopt;
    return text;
}

ParsedVerdicts parse_verdicts(std::string_view raw, int expected_count) {
    if (expected_count < 1) {
        throw InvariantViolation("parse_verdicts: expected_count must be >= 1");
    }
    json j = parse_object_or_fail(raw, "verdicts");

    // Keys are "Question N" up to whitespace and case; collect by N.
    std::map<int, const json*> by_index;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string_view key = trim(it.key());
        std::string low = lower(key);
        std::string_view rest(low);
        constexpr std::string_view kWord = "question";
        if (rest.substr(0, kWord.size()) != kWord) {
            throw ParseFailure("verdicts: unexpected key '" + it.key() + "'");
        }
        rest.remove_prefix(kWord.size());
        rest = trim(rest);
        if (rest.empty() || !std::all_of(rest.begin(), rest.end(), [](unsigned char c) {
                return std::isdigit(c);
            })) {
            throw ParseFailure("verdicts: unexpected key '" + it.key() + "'");
        }
        if (rest.size() > 6) {
            throw ParseFailure("verdicts: implausible question index '" + it.key() + "'");
        }
        int index = std::stoi(std::string(rest));
        if (!by_index.emplace(index, &it.value()).second) {
            throw ParseFailure("verdicts: duplicate question index " + std::to_string(index));
        }
    }

    if (static_cast<int>(by_index.size()) != expected_count) {
        throw ParseFailure("verdicts: got " + std::to_string(by_index.size()) + " questions, expected " +
                           std::to_string(expected_count));
    }

    ParsedVerdicts verdicts;
    for (int i = 1; i <= expected_count; ++i) {
        auto it = by_index.find(i);
        if (it == by_index.end()) {
            throw ParseFailure("verdicts: missing Question " + std::to_string(i));
        }
        const json& entry = *it->second;
        if (!entry.is_object()) {
            throw ParseFailure("verdicts: Question " + std::to_string(i) + " is not an object");
        }
        const json* score = find_key(entry, "score");
        if (!score || !score->is_string()) {
            throw ParseFailure("verdicts: Question " + std::to_string(i) + " has no score");
        }
        std::string normalized = lower(trim(score->get<std::string>()));
        QuestionVerdict v;
        if (normalized == "yes") {
            v.score = Verdict::Yes;
        } else if (normalized == "no") {
            v.score = Verdict::No;
        } else {
            // "PARTIAL" and friends are failures, not NOs; coercing would
            // quietly skew pass rates.
            throw ParseFailure("verdicts: score '" + score->get<std::string>() + "' is not YES/NO");
        }
        if (const json* explanation = find_key(entry, "explanation");
            explanation && explanation->is_string()) {
            v.explanation = explanation->get<std::string>();
        }
        verdicts.per_question.push_back(std::move(v));
    }
    return verdicts;
}

std::string serialize_composer_output(const ParsedComposerOutput& out) {
    return json{{"augmented query", out.augmented_query}, {"question", out.question}}.dump();
}

}  // namespace ultraif
