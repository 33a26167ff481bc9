#include "ultraif/emit.hpp"

#include "ultraif/errors.hpp"

namespace ultraif {

namespace {

json prompt_messages_json(const AugmentedInstruction& aug) {
    json messages = json::array();
    for (const auto& turn : aug.history) {
        messages.push_back(json{{"role", turn.role}, {"content", turn.text}});
    }
    messages.push_back(json{{"role", "user"}, {"content", aug.text}});
    return messages;
}

const CandidateResponse& candidate_at(const SynthesisOutcome& outcome, int index, const char* what) {
    if (index < 0 || index >= static_cast<int>(outcome.candidates.size())) {
        throw InvariantViolation(std::string(what) + " index out of range for " +
                                 outcome.augmented.root_id);
    }
    return outcome.candidates[static_cast<std::size_t>(index)];
}

}  // namespace

json sft_record_json(const SynthesisOutcome& outcome) {
    if (!outcome.chosen) {
        throw InvariantViolation("sft record requires a chosen response: " +
                                 outcome.augmented.root_id);
    }
    const auto& chosen = candidate_at(outcome, *outcome.chosen, "chosen");
    json messages = prompt_messages_json(outcome.augmented);
    messages.push_back(json{{"role", "assistant"}, {"content", chosen.text}});
    return json{{"messages", std::move(messages)}, {"questions", outcome.augmented.questions}};
}

json pref_record_json(const SynthesisOutcome& outcome) {
    if (!outcome.chosen || !outcome.rejected) {
        throw InvariantViolation("preference record requires both chosen and rejected: " +
                                 outcome.augmented.root_id);
    }
    if (*outcome.chosen == *outcome.rejected) {
        throw InvariantViolation("chosen and rejected are the same candidate: " +
                                 outcome.augmented.root_id);
    }
    const auto& chosen = candidate_at(outcome, *outcome.chosen, "chosen");
    const auto& rejected = candidate_at(outcome, *outcome.rejected, "rejected");
    if (!chosen.all_yes) {
        throw InvariantViolation("chosen candidate failed a question: " +
                                 outcome.augmented.root_id);
    }
    if (rejected.all_yes) {
        throw InvariantViolation("rejected candidate passed every question: " +
                                 outcome.augmented.root_id);
    }
    return json{{"prompt_messages", prompt_messages_json(outcome.augmented)},
                {"chosen", chosen.text},
                {"rejected", rejected.text},
                {"questions", outcome.augmented.questions}};
}

std::int64_t emit_sft(std::span<const SynthesisOutcome> outcomes, const std::filesystem::path& path) {
    JsonlWriter out(path);
    for (const auto& outcome : outcomes) {
        if (!outcome.chosen) continue;
        out.write(sft_record_json(outcome));
    }
    return out.lines_written();
}

std::int64_t emit_pref(std::span<const SynthesisOutcome> outcomes, const std::filesystem::path& path) {
    JsonlWriter out(path);
    for (const auto& outcome : outcomes) {
        if (outcome.status != OutcomeStatus::SftAndDpo) continue;
        out.write(pref_record_json(outcome));
    }
    return out.lines_written();
}

EmitFormat emit_format_from_string(std::string_view name) {
    if (name == "both" || name.empty()) return EmitFormat::Both;
    if (name == "sft") return EmitFormat::Sft;
    if (name == "pref") return EmitFormat::Pref;
    throw ConfigError("unknown emit format: " + std::string(name) +
                      " (expected sft, pref, or both)");
}

std::string_view to_string(EmitFormat format) {
    switch (format) {
        case EmitFormat::Both: return "both";
        case EmitFormat::Sft: return "sft";
        case EmitFormat::Pref: return "pref";
    }
    return "both";
}

EmitResult emit_training_files(std::span<const SynthesisOutcome> outcomes, const IterationPlan& plan,
                               const std::filesystem::path& out_dir, EmitFormat format) {
    EmitResult result;
    if (format != EmitFormat::Pref) result.sft_records = emit_sft(outcomes, out_dir / "sft.jsonl");
    if (format == EmitFormat::Sft) return result;

    for (const auto& step : plan.iterations) {
        JsonlWriter out(out_dir / ("pref_iter" + std::to_string(step.index) + ".jsonl"));
        for (const auto& outcome : outcomes) {
            if (outcome.status != OutcomeStatus::SftAndDpo) continue;
            if (outcome.augmented.iterations != step.slice.constraint_count) continue;
            out.write(pref_record_json(outcome));
        }
        result.pref_records_per_iteration[step.index] = out.lines_written();
    }

    // Pairs at a complexity no slice covers would otherwise vanish silently.
    for (const auto& outcome : outcomes) {
        if (outcome.status != OutcomeStatus::SftAndDpo) continue;
        bool covered = false;
        for (const auto& step : plan.iterations) {
            if (outcome.augmented.iterations == step.slice.constraint_count) {
                covered = true;
                break;
            }
        }
        if (!covered) ++result.unassigned_pairs;
    }

    write_text_file_atomic(out_dir / "plan.json", plan_to_json(plan).dump(2) + "\n");
    return result;
}

}  // namespace ultraif
