#include "ultraif/manifest.hpp"

#include <filesystem>

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

namespace ultraif {

namespace {

json counters_to_json(const StageCounters& c) {
    return json{
        {"processed", c.processed},
        {"skipped", c.skipped},
        {"retried", c.retried},
        {"dropped_questions", c.dropped_questions},
        {"usage",
         {{"prompt_tokens", c.usage.prompt_tokens},
          {"completion_tokens", c.usage.completion_tokens}}},
    };
}

StageCounters counters_from_json(const json& doc) {
    if (!doc.is_object()) throw CorruptManifest("stage counters must be an object");
    StageCounters c;
    c.processed = doc.value("processed", std::int64_t{0});
    c.skipped = doc.value("skipped", std::int64_t{0});
    c.retried = doc.value("retried", std::int64_t{0});
    c.dropped_questions = doc.value("dropped_questions", std::int64_t{0});
    if (doc.contains("usage")) {
        const json& u = doc.at("usage");
        if (!u.is_object()) throw CorruptManifest("stage usage must be an object");
        c.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
        c.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    }
    return c;
}

std::map<std::string, std::string> string_map_from_json(const json& doc,
                                                        const char* what) {
    if (!doc.is_object()) throw CorruptManifest(std::string(what) + " must be an object");
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : doc.items()) {
        if (!value.is_string())
            throw CorruptManifest(std::string(what) + " values must be strings");
        out[key] = value.get<std::string>();
    }
    return out;
}

}  // namespace

std::string to_string(StageState state) {
    switch (state) {
        case StageState::Pending: return "pending";
        case StageState::Running: return "running";
        case StageState::Done: return "done";
        case StageState::Failed: return "failed";
    }
    return "pending";
}

StageState stage_state_from_string(const std::string& text) {
    if (text == "pending") return StageState::Pending;
    if (text == "running") return StageState::Running;
    if (text == "done") return StageState::Done;
    if (text == "failed") return StageState::Failed;
    throw CorruptManifest("unknown stage state: " + text);
}

bool RunManifest::stage_done(const std::string& name) const {
    auto it = stages.find(name);
    return it != stages.end() && it->second.done();
}

std::string make_run_id(const std::string& config_digest, std::uint64_t seed) {
    return sha256_hex(config_digest + ":" + std::to_string(seed)).substr(0, 12);
}

json manifest_to_json(const RunManifest& manifest) {
    json stages = json::object();
    for (const auto& [name, entry] : manifest.stages) {
        json extra = json::object();
        for (const auto& [key, value] : entry.extra) extra[key] = value;
        stages[name] = json{
            {"state", to_string(entry.state)},
            {"counters", counters_to_json(entry.counters)},
            {"outputs", entry.output_digests},
            {"extra", std::move(extra)},
        };
    }
    return json{
        {"run_id", manifest.run_id},
        {"config_digest", manifest.config_digest},
        {"seed", manifest.seed},
        {"requested_stages", manifest.requested_stages},
        {"stages", std::move(stages)},
        {"inputs", manifest.input_digests},
    };
}

RunManifest manifest_from_json(const json& doc) {
    if (!doc.is_object()) throw CorruptManifest("manifest root must be an object");
    RunManifest m;
    try {
        m.run_id = doc.at("run_id").get<std::string>();
        m.config_digest = doc.at("config_digest").get<std::string>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        for (const json& name : doc.at("requested_stages"))
            m.requested_stages.push_back(name.get<std::string>());
    } catch (const json::exception& ex) {
        throw CorruptManifest(std::string("manifest header malformed: ") + ex.what());
    }
    if (m.run_id.empty() || m.config_digest.empty())
        throw CorruptManifest("manifest run_id and config_digest must be non-empty");

    const json stages = doc.value("stages", json::object());
    if (!stages.is_object()) throw CorruptManifest("manifest stages must be an object");
    for (const auto& [name, body] : stages.items()) {
        if (!body.is_object()) throw CorruptManifest("stage entry must be an object");
        StageEntry entry;
        try {
            entry.state = stage_state_from_string(body.at("state").get<std::string>());
        } catch (const json::exception& ex) {
            throw CorruptManifest(std::string("stage state malformed: ") + ex.what());
        }
        if (body.contains("counters")) entry.counters = counters_from_json(body.at("counters"));
        if (body.contains("outputs"))
            entry.output_digests = string_map_from_json(body.at("outputs"), "stage outputs");
        if (body.contains("extra")) {
            const json& extra = body.at("extra");
            if (!extra.is_object()) throw CorruptManifest("stage extra must be an object");
            for (const auto& [key, value] : extra.items()) {
                if (!value.is_number_integer())
                    throw CorruptManifest("stage extra values must be integers");
                entry.extra[key] = value.get<std::int64_t>();
            }
        }
        if (entry.state == StageState::Done && entry.output_digests.empty())
            throw CorruptManifest("stage " + name + " marked done without output digests");
        m.stages[name] = std::move(entry);
    }

    if (doc.contains("inputs"))
        m.input_digests = string_map_from_json(doc.at("inputs"), "manifest inputs");
    return m;
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
    write_text_file_atomic(path, manifest_to_json(manifest).dump(2) + "\n");
}

RunManifest load_manifest(const std::string& path) {
    if (!std::filesystem::exists(path)) throw CorruptManifest("manifest not found: " + path);
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& ex) {
        throw CorruptManifest("manifest is not valid JSON: " + std::string(ex.what()));
    }
    return manifest_from_json(doc);
}

}  // namespace ultraif
