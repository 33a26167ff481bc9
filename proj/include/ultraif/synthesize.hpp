#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ultraif/augment.hpp"

namespace ultraif {

struct CandidateResponse {
    int index = 0;
    std::string text;
    ParsedVerdicts verdicts;  // aligned with the instruction's question order
    bool all_yes = false;
    int yes_count = 0;
    bool judge_failed = false;  // verdicts were forced to all-NO after retries

    void refresh_tallies() {
        yes_count = verdicts.yes_count();
        all_yes = yes_count == static_cast<int>(verdicts.per_question.size());
    }
};

enum class OutcomeStatus { SftAndDpo, SftOnly, Dropped };

std::string_view to_string(OutcomeStatus status);
OutcomeStatus outcome_status_from_string(std::string_view name);

struct SynthesisOutcome {
    AugmentedInstruction augmented;
    std::vector<CandidateResponse> candidates;
    std::optional<int> chosen;
    std::optional<int> rejected;
    OutcomeStatus status = OutcomeStatus::Dropped;

    int attempts = 0;
    int retried = 0;
    ChatUsage usage;
};

struct Selection {
    std::optional<int> chosen;
    std::optional<int> rejected;
    OutcomeStatus status = OutcomeStatus::Dropped;
};

// The rejection rule: chosen is the lowest-index fully-passing candidate;
// rejected the minimum-yes candidate (ties to the lowest index), present only
// when some candidate failed at least one question.
Selection select_pairs(const std::vector<CandidateResponse>& candidates);

struct LevelStats {
    std::int64_t responses_total = 0;
    std::int64_t responses_all_yes = 0;
    double rate = 0.0;
};

struct PassRateReport {
    // Always keyed 1..3; levels with no traffic stay zeroed.
    std::map<int, LevelStats> per_constraint_level;
    std::int64_t instructions_total = 0;
    std::int64_t instructions_with_chosen = 0;
    double instruction_rate = 0.0;
};

PassRateReport pass_rate(std::span<const SynthesisOutcome> outcomes);
json pass_rate_to_json(const PassRateReport& report);

std::string format_questions_block(const std::vector<std::string>& questions);

ChatRequest response_request(const RoleEndpoint& endpoint, const AugmentedInstruction& aug,
                             int n_samples, std::uint64_t record_seed, int sample_index, int attempt);
ChatRequest judge_request(const RoleEndpoint& endpoint, const AugmentedInstruction& aug,
                          const std::string& response_text, std::uint64_t record_seed,
                          int candidate_index, int attempt);

struct SampleResult {
    std::vector<std::string> texts;
    ChatUsage usage;
    int attempts = 0;
};

// K response texts. With use_n_samples the provider multiplexes one call;
// otherwise K sequential calls are made, each salted so transcripts keep K
// distinct entries.
SampleResult sample_responses(const RoleEndpoint& responder, const AugmentedInstruction& aug, int k,
                              bool use_n_samples, std::uint64_t record_seed);

struct JudgeResult {
    ParsedVerdicts verdicts;
    bool judge_failed = false;
    ChatUsage usage;
    int attempts = 0;
    int retried = 0;
};

// One call covering every question of q-bar. Retry-exhausted parses fall
// back to all-NO with the judge_failed flag: unverified text never gets
// promoted to chosen.
JudgeResult judge(const RoleEndpoint& judge_endpoint, const AugmentedInstruction& aug,
                  const std::string& response_text, std::uint64_t record_seed, int candidate_index,
                  const StagePolicy& policy);

// Full generate-then-evaluate for one instruction.
SynthesisOutcome synthesize_record(const RoleEndpoint& responder, const RoleEndpoint& judge_endpoint,
                                   const AugmentedInstruction& aug, int k, bool use_n_samples,
                                   const StagePolicy& policy);

json outcome_to_json(const SynthesisOutcome& outcome);
SynthesisOutcome outcome_from_json(const json& j);

}  // namespace ultraif
