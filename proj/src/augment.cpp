#include "ultraif/augment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

namespace ultraif {

std::string normalize_question(std::string_view question) {
    std::string out;
    out.reserve(question.size());
    bool pending_space = false;
    for (char ch : question) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    while (!out.empty()) {
        char back = out.back();
        // the space case matters when punctuation follows a gap ("short ?"):
        // stripping the mark exposes the space, which must go too
        if (back == '.' || back == '!' || back == '?' || back == ';' || back == ':' ||
            back == ',' || back == ' ') {
            out.pop_back();
        } else {
            break;
        }
    }
    return out;
}

ChatRequest composer_request(const RoleEndpoint& endpoint, const std::string& text,
                             const std::vector<HistoryTurn>& history, std::uint64_t record_seed,
                             int iteration, int attempt) {
    ChatRequest request;
    request.model_id = endpoint.model_id;
    request.messages = {{"user", composer_input(history, text)}};
    request.temperature = endpoint.temperature;
    request.max_tokens = endpoint.max_tokens;
    request.seed_hint = call_seed(record_seed, "compose", iteration, attempt);
    return request;
}

ComposeResult compose_once(const RoleEndpoint& composer, const std::string& text,
                           const std::vector<HistoryTurn>& history, std::uint64_t record_seed,
                           int iteration, const StagePolicy& policy) {
    if (text.empty()) {
        throw InvariantViolation("compose_once: empty input text");
    }
    ComposeResult result;
    std::string last_error;
    for (int attempt = 0; attempt <= policy.retries; ++attempt) {
        ChatRequest request = composer_request(composer, text, history, record_seed, iteration, attempt);
        ChatResponse response = composer.backend->complete(request);
        ++result.attempts;
        result.usage += response.usage;
        try {
            ParsedComposerOutput parsed = parse_composer_output(response.completions.at(0));
            result.augmented_text = std::move(parsed.augmented_query);
            if (!parsed.question.empty()) {
                result.question = std::move(parsed.question);
            }
            return result;
        } catch (const ParseFailure& e) {
            last_error = e.what();
            ++result.retried;
        }
    }
    throw StageFailure("compose iteration " + std::to_string(iteration) + ": unparseable after " +
                       std::to_string(policy.retries + 1) + " attempts, last: " + last_error);
}

AugmentedInstruction compose_iterative(const RoleEndpoint& composer, const SourceInstruction& inst,
                                       int n_target, const StagePolicy& policy) {
    if (n_target < 0 || n_target > 3) {
        throw InvariantViolation("compose_iterative: n_target outside [0,3]");
    }
    std::uint64_t record_seed = derive_seed(policy.stage_seed, inst.id);

    AugmentedInstruction aug;
    aug.root_id = inst.id;
    aug.text = inst.text;
    aug.history = inst.history;

    std::set<std::string> seen;
    for (int iteration = 1; iteration <= n_target; ++iteration) {
        ComposeResult step;
        try {
            step = compose_once(composer, aug.text, aug.history, record_seed, iteration, policy);
        } catch (const StageFailure&) {
            // Keep what the chain produced so far; the record is usable, just
            // shallower than requested.
            aug.partial = true;
            break;
        }
        aug.attempts += step.attempts;
        aug.retried += step.retried;
        aug.usage += step.usage;

        LineageStep entry;
        entry.iteration = iteration;
        entry.prior_text = aug.text;
        if (step.question && seen.insert(normalize_question(*step.question)).second) {
            entry.added_question = *step.question;
            aug.questions.push_back(*step.question);
        }
        aug.lineage.push_back(std::move(entry));
        aug.text = std::move(step.augmented_text);
        aug.iterations = iteration;
    }
    return aug;
}

std::vector<int> distribute_complexity(std::size_t corpus_size, const std::map<int, double>& mix,
                                       std::uint64_t seed) {
    double sum = 0.0;
    for (const auto& [level, fraction] : mix) {
        if (level < 0 || level > 3) {
            throw BadMix("mix level " + std::to_string(level) + " outside [0,3]");
        }
        if (fraction < 0.0) {
            throw BadMix("negative mix fraction for level " + std::to_string(level));
        }
        sum += fraction;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw BadMix("mix fractions sum to " + std::to_string(sum) + ", expected 1");
    }

    // Largest-remainder apportionment: exact totals, each level within one of
    // fraction * corpus_size.
    struct Share {
        int level;
        std::size_t count;
        double remainder;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    for (const auto& [level, fraction] : mix) {
        double exact = fraction * static_cast<double>(corpus_size);
        auto base = static_cast<std::size_t>(std::floor(exact));
        shares.push_back({level, base, exact - std::floor(exact)});
        assigned += base;
    }
    std::size_t leftover = corpus_size - assigned;
    std::stable_sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) {
        if (a.remainder != b.remainder) return a.remainder > b.remainder;
        return a.level < b.level;
    });
    for (std::size_t i = 0; i < leftover; ++i) {
        ++shares[i % shares.size()].count;
    }

    std::vector<int> slots;
    slots.reserve(corpus_size);
    std::stable_sort(shares.begin(), shares.end(),
                     [](const Share& a, const Share& b) { return a.level < b.level; });
    for (const auto& share : shares) {
        slots.insert(slots.end(), share.count, share.level);
    }

    // Fisher-Yates with an explicit modulo draw: std::shuffle and the
    // distribution classes differ across standard libraries, and this
    // assignment must be reproducible everywhere.
    std::mt19937_64 rng(seed);
    for (std::size_t i = slots.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(slots[i - 1], slots[j]);
    }
    return slots;
}

json augmented_to_json(const AugmentedInstruction& aug) {
    json lineage = json::array();
    for (const auto& step : aug.lineage) {
        json entry{{"iteration", step.iteration}, {"prior_text", step.prior_text}};
        if (step.added_question) entry["added_question"] = *step.added_question;
        lineage.push_back(std::move(entry));
    }
    return json{{"root_id", aug.root_id},
                {"text", aug.text},
                {"questions", aug.questions},
                {"iterations", aug.iterations},
                {"lineage", std::move(lineage)},
                {"partial", aug.partial},
                {"history", history_to_json(aug.history)},
                {"attempts", aug.attempts},
                {"retried", aug.retried},
                {"usage",
                 {{"prompt_tokens", aug.usage.prompt_tokens},
                  {"completion_tokens", aug.usage.completion_tokens}}}};
}

AugmentedInstruction augmented_from_json(const json& j) {
    AugmentedInstruction aug;
    aug.root_id = j.at("root_id").get<std::string>();
    aug.text = j.at("text").get<std::string>();
    for (const auto& q : j.at("questions")) {
        aug.questions.push_back(q.get<std::string>());
    }
    aug.iterations = j.at("iterations").get<int>();
    for (const auto& entry : j.at("lineage")) {
        LineageStep step;
        step.iteration = entry.at("iteration").get<int>();
        step.prior_text = entry.at("prior_text").get<std::string>();
        if (entry.contains("added_question")) {
            step.added_question = entry["added_question"].get<std::string>();
        }
        aug.lineage.push_back(std::move(step));
    }
    aug.partial = j.value("partial", false);
    if (j.contains("history")) {
        aug.history = history_from_json(j["history"]);
    }
    aug.attempts = j.value("attempts", 0);
    aug.retried = j.value("retried", 0);
    if (j.contains("usage")) {
        aug.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
        aug.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return aug;
}

}  // namespace ultraif
