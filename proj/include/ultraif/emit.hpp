#pragma once

#include <filesystem>
#include <map>
#include <span>

#include "ultraif/lossmath.hpp"
#include "ultraif/synthesize.hpp"

namespace ultraif {

// {"messages":[...], "questions":[...]} — history turns, the augmented query
// as the final user message, and the chosen response as the assistant turn.
json sft_record_json(const SynthesisOutcome& outcome);

// {"prompt_messages":[...], "chosen", "rejected", "questions":[...]}.
// Refuses outcomes whose pair is malformed (InvariantViolation).
json pref_record_json(const SynthesisOutcome& outcome);

// One SFT line per outcome with a chosen response, in input order.
// Returns the record count.
std::int64_t emit_sft(std::span<const SynthesisOutcome> outcomes, const std::filesystem::path& path);

// Every complete preference pair into one file, in input order.
std::int64_t emit_pref(std::span<const SynthesisOutcome> outcomes, const std::filesystem::path& path);

struct EmitResult {
    std::int64_t sft_records = 0;
    std::map<int, std::int64_t> pref_records_per_iteration;  // plan index -> count
    std::int64_t unassigned_pairs = 0;  // pairs whose level no slice covers
};

// Which training files to write.
enum class EmitFormat { Both, Sft, Pref };

EmitFormat emit_format_from_string(std::string_view name);
std::string_view to_string(EmitFormat format);

// Writes sft.jsonl, one pref_iterN.jsonl per plan step (sliced by the
// outcome's constraint count = its iteration depth), and plan.json.
// `format` narrows the output to one side; plan.json accompanies pref files.
EmitResult emit_training_files(std::span<const SynthesisOutcome> outcomes, const IterationPlan& plan,
                               const std::filesystem::path& out_dir,
                               EmitFormat format = EmitFormat::Both);

}  // namespace ultraif
