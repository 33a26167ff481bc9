#include "ultraif/decompose.hpp"

#include <set>

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

namespace ultraif {

std::string serialize_history(const std::vector<HistoryTurn>& history) {
    if (history.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i) out.push_back('\n');
        out += history[i].role;
        out += ": ";
        out += history[i].text;
    }
    return out;
}

std::string composer_input(const std::vector<HistoryTurn>& history, const std::string& initial_query) {
    return render(PromptKind::ComposerIO,
                  {{"history", serialize_history(history)}, {"initial_query", initial_query}});
}

ChatRequest decomposition_request(const RoleEndpoint& endpoint, const SourceInstruction& inst,
                                  std::uint64_t record_seed, int attempt) {
    ChatRequest request;
    request.model_id = endpoint.model_id;
    request.messages = {{"user", render(PromptKind::Decomposition, {{"query", inst.text}})}};
    request.temperature = endpoint.temperature;
    request.max_tokens = endpoint.max_tokens;
    request.seed_hint = call_seed(record_seed, "decompose", 0, attempt);
    return request;
}

ChatRequest question_request(const RoleEndpoint& endpoint, const std::string& original_text,
                             const std::string& constraint, std::uint64_t record_seed,
                             int triple_index, int attempt) {
    ChatRequest request;
    request.model_id = endpoint.model_id;
    request.messages = {{"user", render(PromptKind::QuestionGeneration,
                                        {{"query", original_text}, {"constraint", constraint}})}};
    request.temperature = endpoint.temperature;
    request.max_tokens = endpoint.max_tokens;
    request.seed_hint = call_seed(record_seed, "question", triple_index, attempt);
    return request;
}

DecompositionRecord decompose_instruction(const RoleEndpoint& decomposer,
                                          const SourceInstruction& inst, const StagePolicy& policy) {
    std::uint64_t record_seed = derive_seed(policy.stage_seed, inst.id);
    DecompositionRecord record;
    record.source_id = inst.id;

    std::string last_error;
    for (int attempt = 0; attempt <= policy.retries; ++attempt) {
        ChatRequest request = decomposition_request(decomposer, inst, record_seed, attempt);
        ChatResponse response = decomposer.backend->complete(request);
        ++record.attempts;
        record.usage += response.usage;
        try {
            ParsedDecomposition parsed = parse_decomposition(response.completions.at(0));
            record.complex = parsed.complex;
            record.basic_query = std::move(parsed.basic_query);
            for (auto& c : parsed.constraints) {
                record.triples.push_back(
                    {std::move(c.simplified_query), std::move(c.constraint), c.category, std::nullopt});
            }
            return record;
        } catch (const ParseFailure& e) {
            last_error = e.what();
            ++record.retried;
        }
    }
    throw StageFailure("decompose " + inst.id + ": unparseable after " +
                       std::to_string(policy.retries + 1) + " attempts, last: " + last_error);
}

DecompositionRecord attach_questions(const RoleEndpoint& question_gen, DecompositionRecord record,
                                     const SourceInstruction& inst, const StagePolicy& policy) {
    std::uint64_t record_seed = derive_seed(policy.stage_seed, inst.id);

    std::vector<DecompositionTriple> kept;
    kept.reserve(record.triples.size());
    for (std::size_t i = 0; i < record.triples.size(); ++i) {
        DecompositionTriple triple = std::move(record.triples[i]);
        bool resolved = false;
        for (int attempt = 0; attempt <= policy.retries && !resolved; ++attempt) {
            ChatRequest request = question_request(question_gen, inst.text, triple.constraint,
                                                   record_seed, static_cast<int>(i), attempt);
            ChatResponse response = question_gen.backend->complete(request);
            ++record.attempts;
            record.usage += response.usage;
            try {
                triple.question = parse_question(response.completions.at(0));
                resolved = true;
            } catch (const ParseFailure&) {
                ++record.retried;
            }
        }
        if (resolved) {
            kept.push_back(std::move(triple));
        } else {
            ++record.dropped_triples;
        }
    }
    record.triples = std::move(kept);
    return record;
}

std::vector<ComposerExample> build_composer_examples(const DecompositionRecord& record,
                                                     const SourceInstruction& inst) {
    std::vector<ComposerExample> examples;
    for (const auto& triple : record.triples) {
        if (!triple.question) continue;
        examples.push_back({
            composer_input(inst.history, triple.simplified_query),
            serialize_composer_output({inst.text, *triple.question}),
        });
    }
    return examples;
}

json history_to_json(const std::vector<HistoryTurn>& history) {
    json out = json::array();
    for (const auto& turn : history) {
        out.push_back(json{{"role", turn.role}, {"text", turn.text}});
    }
    return out;
}

std::vector<HistoryTurn> history_from_json(const json& j) {
    std::vector<HistoryTurn> out;
    if (j.is_null()) return out;
    if (!j.is_array()) {
        throw ConfigError("history must be an array of {role, text}");
    }
    for (const auto& entry : j) {
        if (!entry.is_object() || !entry.contains("role") || !entry.contains("text")) {
            throw ConfigError("history turn must have role and text");
        }
        out.push_back({entry["role"].get<std::string>(), entry["text"].get<std::string>()});
    }
    return out;
}

json source_instruction_to_json(const SourceInstruction& inst) {
    return json{{"id", inst.id},
                {"text", inst.text},
                {"history", history_to_json(inst.history)},
                {"origin", inst.origin}};
}

SourceInstruction source_instruction_from_json(const json& j) {
    if (!j.is_object() || !j.contains("id") || !j.contains("text")) {
        throw ConfigError("corpus line must carry id and text");
    }
    SourceInstruction inst;
    inst.id = j["id"].get<std::string>();
    inst.text = j["text"].get<std::string>();
    if (inst.id.empty() || inst.text.empty()) {
        throw ConfigError("corpus line with empty id or text");
    }
    if (j.contains("history")) {
        inst.history = history_from_json(j["history"]);
    }
    inst.origin = j.value("origin", std::string{});
    return inst;
}

json decomposition_record_to_json(const DecompositionRecord& record) {
    json triples = json::array();
    for (const auto& t : record.triples) {
        json entry{{"simplified_query", t.simplified_query},
                   {"constraint", t.constraint},
                   {"category", to_string(t.category)}};
        if (t.question) entry["question"] = *t.question;
        triples.push_back(std::move(entry));
    }
    json out{{"source_id", record.source_id},
             {"complex", record.complex},
             {"triples", std::move(triples)},
             {"attempts", record.attempts},
             {"retried", record.retried},
             {"dropped_triples", record.dropped_triples},
             {"usage",
              {{"prompt_tokens", record.usage.prompt_tokens},
               {"completion_tokens", record.usage.completion_tokens}}}};
    if (record.basic_query) out["basic_query"] = *record.basic_query;
    return out;
}

DecompositionRecord decomposition_record_from_json(const json& j) {
    DecompositionRecord record;
    record.source_id = j.at("source_id").get<std::string>();
    record.complex = j.at("complex").get<bool>();
    if (j.contains("basic_query")) record.basic_query = j["basic_query"].get<std::string>();
    for (const auto& t : j.at("triples")) {
        DecompositionTriple triple;
        triple.simplified_query = t.at("simplified_query").get<std::string>();
        triple.constraint = t.at("constraint").get<std::string>();
        triple.category = category_from_string(t.at("category").get<std::string>());
        if (t.contains("question")) triple.question = t["question"].get<std::string>();
        record.triples.push_back(std::move(triple));
    }
    record.attempts = j.value("attempts", 0);
    record.retried = j.value("retried", 0);
    record.dropped_triples = j.value("dropped_triples", 0);
    if (j.contains("usage")) {
        record.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
        record.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return record;
}

json composer_example_to_json(const ComposerExample& example) {
    return json{{"input", example.input}, {"target", example.target}};
}

std::vector<SourceInstruction> load_corpus(const std::filesystem::path& path) {
    std::vector<SourceInstruction> corpus;
    std::set<std::string> seen;
    for (const json& line : read_jsonl(path)) {
        SourceInstruction inst = source_instruction_from_json(line);
        if (!seen.insert(inst.id).second) {
            throw ConfigError("duplicate instruction id in corpus: " + inst.id);
        }
        corpus.push_back(std::move(inst));
    }
    return corpus;
}

}  // namespace ultraif
