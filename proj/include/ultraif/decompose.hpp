#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ultraif/prompting.hpp"
#include "ultraif/stage.hpp"

namespace ultraif {

struct HistoryTurn {
    std::string role;
    std::string text;

    bool operator==(const HistoryTurn&) const = default;
};

// One unit of input: the instruction X plus whatever conversation preceded it.
struct SourceInstruction {
    std::string id;
    std::string text;
    std::vector<HistoryTurn> history;
    std::string origin;  // dataset tag, e.g. sharegpt
};

// (x_i, c_i, q_i): the instruction with one constraint removed, that
// constraint, and the evaluation question for it (filled in by attach_questions).
struct DecompositionTriple {
    std::string simplified_query;
    std::string constraint;
    ConstraintCategory category = ConstraintCategory::Content;
    std::optional<std::string> question;
};

struct DecompositionRecord {
    std::string source_id;
    bool complex = false;
    std::optional<std::string> basic_query;
    std::vector<DecompositionTriple> triples;

    // Bookkeeping for the run manifest.
    int attempts = 0;            // model calls made for this record
    int retried = 0;             // re-samples after parse failures
    int dropped_triples = 0;     // triples lost to question-parse exhaustion
    ChatUsage usage;
};

// input is the rendered composer prompt; target the JSON the composer should
// learn to emit. This pair format is the hand-off to external fine-tuning.
struct ComposerExample {
    std::string input;
    std::string target;
};

// "role: text" lines, or the literal "none" for an empty history. Keeps the
// composer prompt (and thus its fingerprint) stable for history-free inputs.
std::string serialize_history(const std::vector<HistoryTurn>& history);

// The composer prompt body for a given history and query.
std::string composer_input(const std::vector<HistoryTurn>& history, const std::string& initial_query);

// Request builders are public so transcript fixtures can be constructed with
// the exact bytes the stage will send.
ChatRequest decomposition_request(const RoleEndpoint& endpoint, const SourceInstruction& inst,
                                  std::uint64_t record_seed, int attempt);
ChatRequest question_request(const RoleEndpoint& endpoint, const std::string& original_text,
                             const std::string& constraint, std::uint64_t record_seed,
                             int triple_index, int attempt);

// Decomposes one instruction, re-sampling on parse failures up to
// policy.retries extra attempts. Throws StageFailure when every attempt
// failed to parse; backend errors propagate untouched.
DecompositionRecord decompose_instruction(const RoleEndpoint& decomposer,
                                          const SourceInstruction& inst, const StagePolicy& policy);

// Generates one evaluation question per triple. An empty question keeps the
// triple with q absent; parse exhaustion drops the triple and counts it.
DecompositionRecord attach_questions(const RoleEndpoint& question_gen, DecompositionRecord record,
                                     const SourceInstruction& inst, const StagePolicy& policy);

// One example per triple that carries a question; target's augmented query is
// the original instruction text, byte for byte.
std::vector<ComposerExample> build_composer_examples(const DecompositionRecord& record,
                                                     const SourceInstruction& inst);

json history_to_json(const std::vector<HistoryTurn>& history);
std::vector<HistoryTurn> history_from_json(const json& j);

json source_instruction_to_json(const SourceInstruction& inst);
SourceInstruction source_instruction_from_json(const json& j);

json decomposition_record_to_json(const DecompositionRecord& record);
DecompositionRecord decomposition_record_from_json(const json& j);

json composer_example_to_json(const ComposerExample& example);

// Loads and validates an input corpus: ids unique, texts non-empty.
std::vector<SourceInstruction> load_corpus(const std::filesystem::path& path);

}  // namespace ultraif
