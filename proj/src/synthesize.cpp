#include "ultraif/synthesize.hpp"

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

namespace ultraif {

std::string_view to_string(OutcomeStatus status) {
    switch (status) {
        case OutcomeStatus::SftAndDpo: return "sft_and_dpo";
        case OutcomeStatus::SftOnly: return "sft_only";
        case OutcomeStatus::Dropped: return "dropped";
    }
    throw Error("unreachable outcome status");
}

OutcomeStatus outcome_status_from_string(std::string_view name) {
    if (name == "sft_and_dpo") return OutcomeStatus::SftAndDpo;
    if (name == "sft_only") return OutcomeStatus::SftOnly;
    if (name == "dropped") return OutcomeStatus::Dropped;
    throw ConfigError("unknown outcome status: " + std::string(name));
}

Selection select_pairs(const std::vector<CandidateResponse>& candidates) {
    if (candidates.empty()) {
        throw InvariantViolation("select_pairs: no candidates");
    }
    Selection sel;
    for (const auto& c : candidates) {
        if (c.all_yes) {
            sel.chosen = c.index;
            break;
        }
    }
    // Rejected is picked independently of whether a chosen exists, but only
    // when someone actually failed a question.
    const CandidateResponse* worst = nullptr;
    bool any_failed = false;
    for (const auto& c : candidates) {
        if (!c.all_yes) any_failed = true;
        if (!worst || c.yes_count < worst->yes_count) worst = &c;
    }
    if (any_failed) {
        sel.rejected = worst->index;
    }
    if (sel.chosen && sel.rejected) {
        sel.status = OutcomeStatus::SftAndDpo;
    } else if (sel.chosen) {
        sel.status = OutcomeStatus::SftOnly;
    } else {
        sel.status = OutcomeStatus::Dropped;
    }
    return sel;
}

PassRateReport pass_rate(std::span<const SynthesisOutcome> outcomes) {
    PassRateReport report;
    for (int level = 1; level <= 3; ++level) {
        report.per_constraint_level[level] = LevelStats{};
    }
    for (const auto& outcome : outcomes) {
        ++report.instructions_total;
        if (outcome.chosen) ++report.instructions_with_chosen;
        int level = outcome.augmented.iterations;
        if (level < 1 || level > 3) continue;  // level-0 runs carry no questions
        auto& stats = report.per_constraint_level[level];
        for (const auto& c : outcome.candidates) {
            ++stats.responses_total;
            if (c.all_yes) ++stats.responses_all_yes;
        }
    }
    for (auto& [level, stats] : report.per_constraint_level) {
        stats.rate = stats.responses_total == 0
                         ? 0.0
                         : static_cast<double>(stats.responses_all_yes) /
                               static_cast<double>(stats.responses_total);
    }
    report.instruction_rate = report.instructions_total == 0
                                  ? 0.0
                                  : static_cast<double>(report.instructions_with_chosen) /
                                        static_cast<double>(report.instructions_total);
    return report;
}

json pass_rate_to_json(const PassRateReport& report) {
    json levels = json::object();
    for (const auto& [level, stats] : report.per_constraint_level) {
        levels["c=" + std::to_string(level)] = json{
            {"responses_total", stats.responses_total},
            {"responses_all_yes", stats.responses_all_yes},
            {"rate", stats.rate},
        };
    }
    return json{
        {"per_constraint_level", std::move(levels)},
        {"instruction_level",
         {{"instructions_total", report.instructions_total},
          {"with_chosen", report.instructions_with_chosen},
          {"rate", report.instruction_rate}}},
    };
}

std::string format_questions_block(const std::vector<std::string>& questions) {
    std::string out;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        if (i) out.push_back('\n');
        out += "Question " + std::to_string(i + 1) + ": " + questions[i];
    }
    return out;
}

namespace {

std::vector<ChatMessage> history_messages(const AugmentedInstruction& aug) {
    std::vector<ChatMessage> messages;
    for (const auto& turn : aug.history) {
        messages.push_back({turn.role, turn.text});
    }
    return messages;
}

}  // namespace

ChatRequest response_request(const RoleEndpoint& endpoint, const AugmentedInstruction& aug,
                             int n_samples, std::uint64_t record_seed, int sample_index, int attempt) {
    ChatRequest request;
    request.model_id = endpoint.model_id;
    // The responder sees prior turns as real chat context; the final user
    // message carries the augmented query inside the answering prompt.
    request.messages = history_messages(aug);
    request.messages.push_back(
        {"user", render(PromptKind::ResponseGeneration, {{"query", aug.text}})});
    request.temperature = endpoint.temperature;
    request.max_tokens = endpoint.max_tokens;
    request.n_samples = n_samples;
    request.seed_hint = call_seed(record_seed, "respond", sample_index, attempt);
    return request;
}

ChatRequest judge_request(const RoleEndpoint& endpoint, const AugmentedInstruction& aug,
                          const std::string& response_text, std::uint64_t record_seed,
                          int candidate_index, int attempt) {
    ChatRequest request;
    request.model_id = endpoint.model_id;
    request.messages = {{"user", render(PromptKind::ResponseEvaluation,
                                        {{"query", aug.text},
                                         {"response", response_text},
                                         {"question", format_questions_block(aug.questions)}})}};
    request.temperature = endpoint.temperature;
    request.max_tokens = endpoint.max_tokens;
    request.seed_hint = call_seed(record_seed, "judge", candidate_index, attempt);
    return request;
}

SampleResult sample_responses(const RoleEndpoint& responder, const AugmentedInstruction& aug, int k,
                              bool use_n_samples, std::uint64_t record_seed) {
    if (k < 1) {
        throw InvariantViolation("sample_responses: k must be >= 1");
    }
    SampleResult result;
    if (use_n_samples) {
        ChatRequest request = response_request(responder, aug, k, record_seed, 0, 0);
        ChatResponse response = responder.backend->complete(request);
        ++result.attempts;
        result.usage += response.usage;
        result.texts = std::move(response.completions);
    } else {
        for (int i = 0; i < k; ++i) {
            ChatRequest request = response_request(responder, aug, 1, record_seed, i, 0);
            ChatResponse response = responder.backend->complete(request);
            ++result.attempts;
            result.usage += response.usage;
            result.texts.push_back(std::move(response.completions.at(0)));
        }
    }
    if (static_cast<int>(result.texts.size()) != k) {
        throw StageFailure("sample_responses: got " + std::to_string(result.texts.size()) +
                           " responses, wanted " + std::to_string(k));
    }
    return result;
}

JudgeResult judge(const RoleEndpoint& judge_endpoint, const AugmentedInstruction& aug,
                  const std::string& response_text, std::uint64_t record_seed, int candidate_index,
                  const StagePolicy& policy) {
    if (aug.questions.empty()) {
        throw InvariantViolation("judge: instruction has no questions");
    }
    JudgeResult result;
    for (int attempt = 0; attempt <= policy.retries; ++attempt) {
        ChatRequest request =
            judge_request(judge_endpoint, aug, response_text, record_seed, candidate_index, attempt);
        ChatResponse response = judge_endpoint.backend->complete(request);
        ++result.attempts;
        result.usage += response.usage;
        try {
            result.verdicts = parse_verdicts(response.completions.at(0),
                                             static_cast<int>(aug.questions.size()));
            return result;
        } catch (const ParseFailure&) {
            ++result.retried;
        }
    }
    // Conservative fallback: unverifiable responses count as failing every
    // question rather than being guessed at.
    result.judge_failed = true;
    result.verdicts.per_question.assign(aug.questions.size(), QuestionVerdict{"judge output unusable", Verdict::No});
    return result;
}

SynthesisOutcome synthesize_record(const RoleEndpoint& responder, const RoleEndpoint& judge_endpoint,
                                   const AugmentedInstruction& aug, int k, bool use_n_samples,
                                   const StagePolicy& policy) {
    std::uint64_t record_seed = derive_seed(policy.stage_seed, aug.root_id);

    SynthesisOutcome outcome;
    outcome.augmented = aug;

    SampleResult samples = sample_responses(responder, aug, k, use_n_samples, record_seed);
    outcome.attempts += samples.attempts;
    outcome.usage += samples.usage;

    for (int i = 0; i < k; ++i) {
        CandidateResponse candidate;
        candidate.index = i;
        candidate.text = std::move(samples.texts[static_cast<std::size_t>(i)]);
        if (aug.questions.empty()) {
            // Nothing to verify; the candidate passes vacuously.
            candidate.refresh_tallies();
        } else {
            JudgeResult verdict = judge(judge_endpoint, aug, candidate.text, record_seed, i, policy);
            outcome.attempts += verdict.attempts;
            outcome.retried += verdict.retried;
            outcome.usage += verdict.usage;
            candidate.verdicts = std::move(verdict.verdicts);
            candidate.judge_failed = verdict.judge_failed;
            candidate.refresh_tallies();
        }
        outcome.candidates.push_back(std::move(candidate));
    }

    Selection sel = select_pairs(outcome.candidates);
    outcome.chosen = sel.chosen;
    outcome.rejected = sel.rejected;
    outcome.status = sel.status;
    return outcome;
}

json outcome_to_json(const SynthesisOutcome& outcome) {
    json candidates = json::array();
    for (const auto& c : outcome.candidates) {
        json verdicts = json::array();
        for (const auto& v : c.verdicts.per_question) {
            verdicts.push_back(json{{"explanation", v.explanation},
                                    {"score", v.score == Verdict::Yes ? "YES" : "NO"}});
        }
        candidates.push_back(json{{"index", c.index},
                                  {"text", c.text},
                                  {"verdicts", std::move(verdicts)},
                                  {"all_yes", c.all_yes},
                                  {"yes_count", c.yes_count},
                                  {"judge_failed", c.judge_failed}});
    }
    json out{{"root_id", outcome.augmented.root_id},
             {"augmented", augmented_to_json(outcome.augmented)},
             {"candidates", std::move(candidates)},
             {"status", to_string(outcome.status)},
             {"attempts", outcome.attempts},
             {"retried", outcome.retried},
             {"usage",
              {{"prompt_tokens", outcome.usage.prompt_tokens},
               {"completion_tokens", outcome.usage.completion_tokens}}}};
    if (outcome.chosen) out["chosen"] = *outcome.chosen;
    if (outcome.rejected) out["rejected"] = *outcome.rejected;
    return out;
}

SynthesisOutcome outcome_from_json(const json& j) {
    SynthesisOutcome outcome;
    outcome.augmented = augmented_from_json(j.at("augmented"));
    for (const auto& entry : j.at("candidates")) {
        CandidateResponse c;
        c.index = entry.at("index").get<int>();
        c.text = entry.at("text").get<std::string>();
        for (const auto& v : entry.at("verdicts")) {
            QuestionVerdict verdict;
            verdict.explanation = v.value("explanation", std::string{});
            verdict.score = v.at("score").get<std::string>() == "YES" ? Verdict::Yes : Verdict::No;
            c.verdicts.per_question.push_back(std::move(verdict));
        }
        c.judge_failed = entry.value("judge_failed", false);
        c.refresh_tallies();
        outcome.candidates.push_back(std::move(c));
    }
    if (j.contains("chosen")) outcome.chosen = j["chosen"].get<int>();
    if (j.contains("rejected")) outcome.rejected = j["rejected"].get<int>();
    outcome.status = outcome_status_from_string(j.at("status").get<std::string>());
    outcome.attempts = j.value("attempts", 0);
    outcome.retried = j.value("retried", 0);
    if (j.contains("usage")) {
        outcome.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
        outcome.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return outcome;
}

}  // namespace ultraif
