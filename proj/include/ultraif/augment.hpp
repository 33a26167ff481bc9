#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ultraif/decompose.hpp"

namespace ultraif {

struct LineageStep {
    int iteration = 0;                         // 1-based
    std::string prior_text;                    // text fed INTO this iteration
    std::optional<std::string> added_question; // absent when dedup or empty
};

// x-bar with its accumulated question set q-bar.
struct AugmentedInstruction {
    std::string root_id;
    std::string text;
    std::vector<std::string> questions;  // insertion-ordered, deduplicated
    std::vector<LineageStep> lineage;
    int iterations = 0;
    bool partial = false;  // a mid-chain failure stopped the chain early
    std::vector<HistoryTurn> history;

    int attempts = 0;
    int retried = 0;
    ChatUsage usage;
};

// Dedup key: casefold, collapse runs of whitespace, trim, drop trailing
// punctuation. Composers restate questions with this kind of variation.
std::string normalize_question(std::string_view question);

ChatRequest composer_request(const RoleEndpoint& endpoint, const std::string& text,
                             const std::vector<HistoryTurn>& history, std::uint64_t record_seed,
                             int iteration, int attempt);

struct ComposeResult {
    std::string augmented_text;
    std::optional<std::string> question;
    int attempts = 0;
    int retried = 0;
    ChatUsage usage;
};

// One composer call with parse-failure re-sampling. StageFailure after the
// retry budget; backend errors propagate.
ComposeResult compose_once(const RoleEndpoint& composer, const std::string& text,
                           const std::vector<HistoryTurn>& history, std::uint64_t record_seed,
                           int iteration, const StagePolicy& policy);

// Chains compose_once n_target times, each output feeding the next input,
// accumulating the question union. A mid-chain failure returns the last good
// state marked partial instead of throwing.
AugmentedInstruction compose_iterative(const RoleEndpoint& composer, const SourceInstruction& inst,
                                       int n_target, const StagePolicy& policy);

// Deterministic assignment of per-instruction iteration counts matching the
// requested mix to within one instruction per level. Throws BadMix.
std::vector<int> distribute_complexity(std::size_t corpus_size, const std::map<int, double>& mix,
                                       std::uint64_t seed);

json augmented_to_json(const AugmentedInstruction& aug);
AugmentedInstruction augmented_from_json(const json& j);

}  // namespace ultraif
