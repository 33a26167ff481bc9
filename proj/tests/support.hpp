#pragma once

// Shared helpers for the test binaries: scratch directories, canned chat
// responses, and replay-transcript builders that mirror the pipeline's own
// request construction so fixtures hit the exact fingerprints a run issues.

#include <stdlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ultraif/errors.hpp"

#include "ultraif/augment.hpp"
#include "ultraif/backend.hpp"
#include "ultraif/config.hpp"
#include "ultraif/decompose.hpp"
#include "ultraif/hashing.hpp"
#include "ultraif/jsonl.hpp"
#include "ultraif/prompting.hpp"
#include "ultraif/synthesize.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using ultraif::json;

struct TempDir {
    fs::path path;

    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "ultraif-test-XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) {
            throw std::runtime_error("mkdtemp failed for " + tmpl);
        }
        path = buf.data();
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    fs::path file(const std::string& name) const { return path / name; }
};

inline std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline ultraif::ChatResponse canned(std::vector<std::string> completions) {
    ultraif::ChatResponse response;
    response.completions = std::move(completions);
    response.usage.prompt_tokens = 10;
    response.usage.completion_tokens = 20;
    response.backend_id = "fixture";
    return response;
}

// Answers every request through a user-supplied function; the workhorse for
// unit tests that script model behavior without a transcript.
class LambdaBackend final : public ultraif::ChatBackend {
public:
    using Fn = std::function<ultraif::ChatResponse(const ultraif::ChatRequest&)>;
    explicit LambdaBackend(Fn fn) : fn_(std::move(fn)) {}

    ultraif::ChatResponse complete(const ultraif::ChatRequest& request) override {
        request.validate();
        std::lock_guard<std::mutex> lock(mu_);
        ++calls;
        return fn_(request);
    }
    std::string id() const override { return "lambda"; }

    int calls = 0;

private:
    Fn fn_;
    std::mutex mu_;
};

// Returns the scripted completions one call at a time, in order.
class ScriptedBackend final : public ultraif::ChatBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> script) : script_(std::move(script)) {}

    ultraif::ChatResponse complete(const ultraif::ChatRequest& request) override {
        request.validate();
        std::lock_guard<std::mutex> lock(mu_);
        if (next_ >= script_.size()) {
            throw ultraif::TransportError("scripted backend: no reply left for call " +
                                          std::to_string(next_));
        }
        return canned({script_[next_++]});
    }
    std::string id() const override { return "scripted"; }

    std::size_t calls() const { return next_; }

private:
    std::vector<std::string> script_;
    std::size_t next_ = 0;
    std::mutex mu_;
};

inline ultraif::RoleEndpoint make_endpoint(ultraif::ChatBackend& backend,
                                           double temperature = 0.0, int max_tokens = 512) {
    ultraif::RoleEndpoint endpoint;
    endpoint.backend = &backend;
    endpoint.model_id = "fixture-model";
    endpoint.temperature = temperature;
    endpoint.max_tokens = max_tokens;
    return endpoint;
}

inline ultraif::RoleEndpoint fixture_endpoint(const ultraif::PipelineConfig& cfg,
                                              ultraif::Role role) {
    ultraif::RoleEndpoint endpoint;
    endpoint.backend = nullptr;  // request builders never touch it
    endpoint.model_id = cfg.role_model(role);
    endpoint.temperature = cfg.role_temperature(role);
    endpoint.max_tokens = cfg.role_max_tokens(role);
    return endpoint;
}

// A deterministic minimal config for replay-driven pipeline tests.
inline ultraif::PipelineConfig fixture_config(const fs::path& corpus, const fs::path& out_dir,
                                              const fs::path& replay, std::uint64_t seed,
                                              int k = 2) {
    ultraif::PipelineConfig cfg;
    cfg.model = "fixture-model";
    cfg.base_url = "";  // replay only
    cfg.parallelism = 2;
    cfg.k = k;
    cfg.augment_iterations = 2;
    cfg.emit_iterations = 3;
    cfg.input_path = corpus.string();
    cfg.out_dir = out_dir.string();
    cfg.replay_path = replay.string();
    cfg.seed = seed;
    return cfg;
}

// ---------------------------------------------------------------------------
// Scenario description: everything the fake models will say for one
// instruction, from decomposition through judging.

struct TripleSpec {
    std::string simplified;
    std::string constraint;
    std::string category = "Content";
    std::string question;  // empty: the question model declines
};

struct DecompSpec {
    bool complex = false;
    std::string basic_query;
    std::vector<TripleSpec> triples;
};

struct ComposeStep {
    std::string new_text;
    std::string question;  // empty: compact output without a usable question
};

struct InstScenario {
    ultraif::SourceInstruction inst;
    DecompSpec decomp;
    std::vector<ComposeStep> compose;           // one entry per augment iteration
    std::vector<std::string> responses;         // K candidate texts
    std::vector<std::vector<bool>> verdicts;    // [candidate][question] -> YES?
};

// The decomposition reply in the same dialect the template demonstrates:
// Python-style booleans and per-category keys.
inline std::string decomposition_reply(const DecompSpec& spec) {
    if (!spec.complex) {
        return "{\n    \"Complex\": False,\n}";
    }
    json body;
    body["Complex"] = true;
    if (!spec.basic_query.empty()) body["Basic Query"] = spec.basic_query;
    for (const auto& triple : spec.triples) {
        body[triple.category + " Constraints"].push_back(
            json{{"constraint", triple.constraint}, {"simplified query", triple.simplified}});
    }
    std::string text = body.dump(4);
    // The template's examples write booleans Python-style; mirror that.
    const auto pos = text.find("\"Complex\": true");
    if (pos != std::string::npos) text.replace(pos, 15, "\"Complex\": True");
    return "Here is the analysis.\n" + text;
}

inline std::string question_reply(const std::string& question) {
    return json{{"question", question}}.dump(4);
}

inline std::string composer_reply(const ComposeStep& step) {
    ultraif::ParsedComposerOutput out;
    out.augmented_query = step.new_text;
    out.question = step.question;
    return ultraif::serialize_composer_output(out);
}

inline std::string judge_reply(const std::vector<bool>& yes_per_question) {
    json body = json::object();
    for (std::size_t q = 0; q < yes_per_question.size(); ++q) {
        body["Question " + std::to_string(q + 1)] =
            json{{"score", yes_per_question[q] ? "YES" : "NO"},
                 {"explanation", "fixture verdict"}};
    }
    return body.dump(4);
}

// What augmentation produces for this scenario; used both to stage judge
// fixtures and as the expected value in assertions.
inline ultraif::AugmentedInstruction expected_augmented(const InstScenario& sc) {
    ultraif::AugmentedInstruction aug;
    aug.root_id = sc.inst.id;
    aug.text = sc.inst.text;
    aug.history = sc.inst.history;
    std::set<std::string> seen;
    int iteration = 0;
    for (const auto& step : sc.compose) {
        ++iteration;
        ultraif::LineageStep lineage;
        lineage.iteration = iteration;
        lineage.prior_text = aug.text;
        if (!step.question.empty()) {
            const std::string key = ultraif::normalize_question(step.question);
            if (seen.insert(key).second) {
                aug.questions.push_back(step.question);
                lineage.added_question = step.question;
            }
        }
        aug.lineage.push_back(std::move(lineage));
        aug.text = step.new_text;
        aug.iterations = iteration;
    }
    return aug;
}

// Inserts every exchange the pipeline will request for these scenarios at
// the given run seed. Requests are built with the library's own builders so
// fingerprints line up by construction.
inline void add_scenarios(ultraif::ReplayTranscript& transcript,
                          const ultraif::PipelineConfig& cfg,
                          const std::vector<InstScenario>& scenarios) {
    using ultraif::Role;
    const auto decomposer = fixture_endpoint(cfg, Role::Decomposer);
    const auto question_gen = fixture_endpoint(cfg, Role::QuestionGen);
    const auto composer = fixture_endpoint(cfg, Role::Composer);
    const auto responder = fixture_endpoint(cfg, Role::Responder);
    const auto judge = fixture_endpoint(cfg, Role::Judge);

    const std::uint64_t decompose_seed = ultraif::derive_seed(cfg.seed, "decompose");
    const std::uint64_t augment_seed = ultraif::derive_seed(cfg.seed, "augment");
    const std::uint64_t synth_seed = ultraif::derive_seed(cfg.seed, "synthesize");

    for (const auto& sc : scenarios) {
        // decompose stage
        {
            const std::uint64_t record_seed = ultraif::derive_seed(decompose_seed, sc.inst.id);
            transcript.insert(ultraif::decomposition_request(decomposer, sc.inst, record_seed, 0),
                              canned({decomposition_reply(sc.decomp)}));
            if (sc.decomp.complex) {
                for (std::size_t t = 0; t < sc.decomp.triples.size(); ++t) {
                    transcript.insert(
                        ultraif::question_request(question_gen, sc.inst.text,
                                                  sc.decomp.triples[t].constraint, record_seed,
                                                  static_cast<int>(t), 0),
                        canned({question_reply(sc.decomp.triples[t].question)}));
                }
            }
        }
        // augment stage
        {
            const std::uint64_t record_seed = ultraif::derive_seed(augment_seed, sc.inst.id);
            std::string text = sc.inst.text;
            for (std::size_t i = 0; i < sc.compose.size(); ++i) {
                transcript.insert(
                    ultraif::composer_request(composer, text, sc.inst.history, record_seed,
                                              static_cast<int>(i) + 1, 0),
                    canned({composer_reply(sc.compose[i])}));
                text = sc.compose[i].new_text;
            }
        }
        // synthesize stage
        {
            const std::uint64_t record_seed = ultraif::derive_seed(synth_seed, sc.inst.id);
            const ultraif::AugmentedInstruction aug = expected_augmented(sc);
            transcript.insert(
                ultraif::response_request(responder, aug, static_cast<int>(sc.responses.size()),
                                          record_seed, 0, 0),
                canned(sc.responses));
            if (!aug.questions.empty()) {
                for (std::size_t c = 0; c < sc.responses.size(); ++c) {
                    transcript.insert(
                        ultraif::judge_request(judge, aug, sc.responses[c], record_seed,
                                               static_cast<int>(c), 0),
                        canned({judge_reply(sc.verdicts.at(c))}));
                }
            }
        }
    }
}

inline void write_corpus(const fs::path& path, const std::vector<InstScenario>& scenarios) {
    ultraif::JsonlWriter out(path);
    for (const auto& sc : scenarios) {
        json line{{"id", sc.inst.id}, {"text", sc.inst.text}};
        if (!sc.inst.origin.empty()) line["origin"] = sc.inst.origin;
        if (!sc.inst.history.empty()) {
            json history = json::array();
            for (const auto& turn : sc.inst.history) {
                history.push_back(json{{"role", turn.role}, {"text", turn.text}});
            }
            line["history"] = history;
        }
        out.write(line);
    }
    out.close();
}

// The canonical three-instruction scenario set used by the determinism and
// end-to-end tests. Each instruction gets exactly two compose steps (the
// fixture config requests a uniform two iterations): one accumulates two
// distinct questions, one hits the question dedup, one ends up questionless.
inline std::vector<InstScenario> standard_scenarios(int k = 2) {
    std::vector<InstScenario> scenarios(3);

    auto& a = scenarios[0];
    a.inst.id = "inst-001";
    a.inst.text = "Explain how a merkle tree works in blockchain.";
    a.inst.origin = "sharegpt";
    a.decomp.complex = true;
    a.decomp.basic_query = "Explain how a merkle tree works.";
    a.decomp.triples = {
        {"Explain how a merkle tree works.", "in blockchain", "Content",
         "Does the response explain the concept in the context of blockchain?"}};
    a.compose = {
        {"Explain how a merkle tree works in blockchain, in under 100 words.",
         "Is the response under 100 words?"},
        {"Explain how a merkle tree works in blockchain, in under 100 words, citing one source.",
         "Does the response cite one source?"}};
    a.responses.resize(static_cast<std::size_t>(k));
    a.verdicts.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        a.responses[static_cast<std::size_t>(c)] =
            "Merkle tree answer variant " + std::to_string(c + 1) + ".";
        // first candidate passes everything, the rest fail the second question
        a.verdicts[static_cast<std::size_t>(c)] = {true, c == 0};
    }

    auto& b = scenarios[1];
    b.inst.id = "inst-002";
    b.inst.text = "What is the meaning of life?";
    b.inst.origin = "openhermes";
    b.decomp.complex = false;
    b.compose = {
        {"What is the meaning of life? Answer as a haiku.", "Is the answer a haiku?"},
        // restates the same check; normalization collapses it onto the first
        {"What is the meaning of life? Answer as a haiku, in English.",
         "IS THE ANSWER A HAIKU."}};
    b.responses.resize(static_cast<std::size_t>(k));
    b.verdicts.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        b.responses[static_cast<std::size_t>(c)] = "Life answer " + std::to_string(c + 1) + ".";
        b.verdicts[static_cast<std::size_t>(c)] = {false};  // nobody writes a haiku
    }

    auto& c = scenarios[2];
    c.inst.id = "inst-003";
    c.inst.text = "Design a html form with form tags.";
    c.inst.origin = "norobots";
    c.inst.history = {{"user", "I am building a signup page."},
                      {"assistant", "Happy to help with the markup."}};
    c.decomp.complex = true;
    c.decomp.triples = {{"Design a html form.", "with form tags", "Format",
                         "Does the response use form tags?"}};
    // text evolves but the composer never yields a usable question, so the
    // question set stays empty and judging is skipped entirely
    c.compose = {{"Design a html form with form tags and a submit button.", ""},
                 {"Design a html form with form tags, a submit button, and labels.", ""}};
    c.responses.resize(static_cast<std::size_t>(k));
    c.verdicts.resize(static_cast<std::size_t>(k));
    for (int idx = 0; idx < k; ++idx) {
        c.responses[static_cast<std::size_t>(idx)] =
            "<form>variant " + std::to_string(idx + 1) + "</form>";
        c.verdicts[static_cast<std::size_t>(idx)] = {};
    }

    return scenarios;
}

// Writes corpus + transcript for the scenarios and returns the ready config.
inline ultraif::PipelineConfig stage_fixture_run(const TempDir& dir,
                                                 const std::vector<InstScenario>& scenarios,
                                                 std::uint64_t seed, int k,
                                                 const std::string& out_name = "out") {
    const fs::path corpus = dir.file("corpus.jsonl");
    const fs::path replay = dir.file("transcript.jsonl");
    if (!fs::exists(corpus)) write_corpus(corpus, scenarios);
    ultraif::PipelineConfig cfg =
        fixture_config(corpus, dir.file(out_name), replay, seed, k);
    if (!fs::exists(replay)) {
        ultraif::ReplayTranscript transcript;
        add_scenarios(transcript, cfg, scenarios);
        transcript.save(replay);
    }
    return cfg;
}

}  // namespace testsupport
