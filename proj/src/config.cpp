#include "ultraif/config.hpp"

#include <set>

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

namespace ultraif {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::Decomposer: return "decomposer";
        case Role::QuestionGen: return "question_gen";
        case Role::Composer: return "composer";
        case Role::Responder: return "responder";
        case Role::Judge: return "judge";
    }
    throw Error("unreachable role");
}

const std::vector<Role>& all_roles() {
    static const std::vector<Role> kRoles{Role::Decomposer, Role::QuestionGen, Role::Composer,
                                          Role::Responder, Role::Judge};
    return kRoles;
}

namespace {

Role role_from_string(std::string_view name) {
    for (Role role : all_roles()) {
        if (to_string(role) == name) return role;
    }
    throw ConfigError("unknown role: " + std::string(name));
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.contains(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

double get_number(const json& obj, const char* key, const std::string& where) {
    if (!obj[key].is_number()) {
        throw ConfigError(std::string(key) + " in " + where + " must be a number");
    }
    return obj[key].get<double>();
}

int get_int(const json& obj, const char* key, const std::string& where) {
    if (!obj[key].is_number_integer()) {
        throw ConfigError(std::string(key) + " in " + where + " must be an integer");
    }
    return obj[key].get<int>();
}

// Default decoding temperatures per stage: the extraction stages and the
// judge want determinism, the composer and responder want diversity.
constexpr double kDecomposeTemp = 0.0;
constexpr double kQuestionTemp = 0.0;
constexpr double kComposerTemp = 0.7;
constexpr double kResponseTemp = 0.8;
constexpr double kJudgeTemp = 0.0;

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) try {
    if (!j.is_object()) {
        throw ConfigError("config root must be an object");
    }
    reject_unknown_keys(j, {"backend", "roles", "stages", "paths", "seed", "replay", "record"},
                        "config root");

    PipelineConfig cfg;

    if (j.contains("backend")) {
        const json& b = j["backend"];
        reject_unknown_keys(b,
                            {"base_url", "model", "temperature", "max_retries", "parallelism",
                             "max_tokens", "use_n_samples"},
                            "backend");
        cfg.base_url = b.value("base_url", std::string{});
        cfg.model = b.value("model", std::string{});
        if (b.contains("temperature")) cfg.backend_temperature = get_number(b, "temperature", "backend");
        if (b.contains("max_retries")) cfg.max_retries = get_int(b, "max_retries", "backend");
        if (b.contains("parallelism")) cfg.parallelism = get_int(b, "parallelism", "backend");
        if (b.contains("max_tokens")) cfg.max_tokens = get_int(b, "max_tokens", "backend");
        if (b.contains("use_n_samples")) {
            if (!b["use_n_samples"].is_boolean()) {
                throw ConfigError("backend.use_n_samples must be a boolean");
            }
            cfg.use_n_samples = b["use_n_samples"].get<bool>();
        }
    }

    if (j.contains("roles")) {
        for (auto it = j["roles"].begin(); it != j["roles"].end(); ++it) {
            Role role = role_from_string(it.key());
            const json& r = it.value();
            reject_unknown_keys(r, {"base_url", "model", "temperature", "max_tokens"},
                                "roles." + it.key());
            EndpointOverride over;
            if (r.contains("base_url")) over.base_url = r["base_url"].get<std::string>();
            if (r.contains("model")) over.model = r["model"].get<std::string>();
            if (r.contains("temperature")) over.temperature = get_number(r, "temperature", it.key());
            if (r.contains("max_tokens")) over.max_tokens = get_int(r, "max_tokens", it.key());
            cfg.roles[role] = over;
        }
    }

    if (j.contains("stages")) {
        const json& s = j["stages"];
        reject_unknown_keys(
            s, {"retries", "decompose", "question_gen", "augment", "synthesize", "emit", "decontam"},
            "stages");
        if (s.contains("retries")) cfg.retries = get_int(s, "retries", "stages");
        if (s.contains("decompose")) {
            reject_unknown_keys(s["decompose"], {"temperature"}, "stages.decompose");
            if (s["decompose"].contains("temperature")) {
                cfg.decompose_temperature = get_number(s["decompose"], "temperature", "decompose");
            }
        }
        if (s.contains("question_gen")) {
            reject_unknown_keys(s["question_gen"], {"temperature"}, "stages.question_gen");
            if (s["question_gen"].contains("temperature")) {
                cfg.question_temperature = get_number(s["question_gen"], "temperature", "question_gen");
            }
        }
        if (s.contains("augment")) {
            const json& a = s["augment"];
            reject_unknown_keys(a, {"iterations", "mix", "temperature"}, "stages.augment");
            if (a.contains("iterations")) cfg.augment_iterations = get_int(a, "iterations", "augment");
            if (a.contains("temperature")) {
                cfg.composer_temperature = get_number(a, "temperature", "augment");
            }
            if (a.contains("mix")) {
                if (!a["mix"].is_object()) {
                    throw ConfigError("stages.augment.mix must map iteration count to fraction");
                }
                for (auto mit = a["mix"].begin(); mit != a["mix"].end(); ++mit) {
                    int level = 0;
                    try {
                        level = std::stoi(mit.key());
                    } catch (const std::exception&) {
                        throw ConfigError("mix key '" + mit.key() + "' is not an integer");
                    }
                    cfg.augment_mix[level] = mit.value().get<double>();
                }
            }
        }
        if (s.contains("synthesize")) {
            const json& y = s["synthesize"];
            reject_unknown_keys(y, {"k", "response_temperature", "judge_temperature"},
                                "stages.synthesize");
            if (y.contains("k")) cfg.k = get_int(y, "k", "synthesize");
            if (y.contains("response_temperature")) {
                cfg.response_temperature = get_number(y, "response_temperature", "synthesize");
            }
            if (y.contains("judge_temperature")) {
                cfg.judge_temperature = get_number(y, "judge_temperature", "synthesize");
            }
        }
        if (s.contains("emit")) {
            const json& e = s["emit"];
            reject_unknown_keys(e, {"beta", "iterations", "nca_final", "format"}, "stages.emit");
            if (e.contains("beta")) cfg.beta = get_number(e, "beta", "emit");
            if (e.contains("iterations")) cfg.emit_iterations = get_int(e, "iterations", "emit");
            if (e.contains("nca_final")) cfg.nca_final = e["nca_final"].get<bool>();
            if (e.contains("format"))
                cfg.emit_format = emit_format_from_string(e["format"].get<std::string>());
        }
        if (s.contains("decontam")) {
            const json& d = s["decontam"];
            reject_unknown_keys(d, {"n", "fields", "max_flagged", "benchmarks"}, "stages.decontam");
            if (d.contains("n")) cfg.decontam_n = get_int(d, "n", "decontam");
            if (d.contains("fields")) {
                cfg.decontam_fields = field_mode_from_string(d["fields"].get<std::string>());
            }
            if (d.contains("max_flagged")) cfg.decontam_max_flagged = get_int(d, "max_flagged", "decontam");
            if (d.contains("benchmarks")) {
                for (const auto& bench : d["benchmarks"]) {
                    reject_unknown_keys(bench, {"name", "path"}, "decontam benchmark");
                    cfg.benchmarks.emplace_back(bench.at("name").get<std::string>(),
                                                bench.at("path").get<std::string>());
                }
            }
        }
    }

    if (j.contains("paths")) {
        reject_unknown_keys(j["paths"], {"input", "out_dir"}, "paths");
        cfg.input_path = j["paths"].value("input", std::string{});
        cfg.out_dir = j["paths"].value("out_dir", std::string{});
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
            throw ConfigError("seed must be an integer");
        }
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    cfg.replay_path = j.value("replay", std::string{});
    cfg.record_path = j.value("record", std::string{});

    cfg.validate();
    return cfg;
} catch (const json::exception& ex) {
    throw ConfigError(std::string("config malformed: ") + ex.what());
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw ConfigError("config file is not valid JSON: " + path.string());
    }
    return from_json(j);
}

json PipelineConfig::to_json() const {
    json roles_json = json::object();
    for (const auto& [role, over] : roles) {
        json r = json::object();
        if (over.base_url) r["base_url"] = *over.base_url;
        if (over.model) r["model"] = *over.model;
        if (over.temperature) r["temperature"] = *over.temperature;
        if (over.max_tokens) r["max_tokens"] = *over.max_tokens;
        roles_json[std::string(to_string(role))] = std::move(r);
    }

    json mix = json::object();
    for (const auto& [level, fraction] : augment_mix) {
        mix[std::to_string(level)] = fraction;
    }

    json benchmarks_json = json::array();
    for (const auto& [name, path] : benchmarks) {
        benchmarks_json.push_back(json{{"name", name}, {"path", path}});
    }

    json backend_json{{"base_url", base_url},
                      {"model", model},
                      {"max_retries", max_retries},
                      {"parallelism", parallelism},
                      {"max_tokens", max_tokens},
                      {"use_n_samples", use_n_samples}};
    // Absent, not null: the materialized form must parse back unchanged.
    if (backend_temperature) backend_json["temperature"] = *backend_temperature;

    return json{
        {"backend", std::move(backend_json)},
        {"roles", std::move(roles_json)},
        {"stages",
         {{"retries", retries},
          {"decompose", {{"temperature", role_temperature(Role::Decomposer)}}},
          {"question_gen", {{"temperature", role_temperature(Role::QuestionGen)}}},
          {"augment",
           {{"iterations", augment_iterations},
            {"mix", std::move(mix)},
            {"temperature", role_temperature(Role::Composer)}}},
          {"synthesize",
           {{"k", k},
            {"response_temperature", role_temperature(Role::Responder)},
            {"judge_temperature", role_temperature(Role::Judge)}}},
          {"emit",
           {{"beta", beta},
            {"iterations", emit_iterations},
            {"nca_final", nca_final},
            {"format", std::string(to_string(emit_format))}}},
          {"decontam",
           {{"n", decontam_n},
            {"fields", to_string(decontam_fields)},
            {"max_flagged", decontam_max_flagged},
            {"benchmarks", std::move(benchmarks_json)}}}}},
        {"paths", {{"input", input_path}, {"out_dir", out_dir}}},
        {"seed", seed},
        {"replay", replay_path},
        {"record", record_path},
    };
}

std::string PipelineConfig::digest() const {
    return sha256_hex(to_json().dump());
}

double PipelineConfig::role_temperature(Role role) const {
    if (auto it = roles.find(role); it != roles.end() && it->second.temperature) {
        return *it->second.temperature;
    }
    auto stage_default = [&]() -> std::pair<std::optional<double>, double> {
        switch (role) {
            case Role::Decomposer: return {decompose_temperature, kDecomposeTemp};
            case Role::QuestionGen: return {question_temperature, kQuestionTemp};
            case Role::Composer: return {composer_temperature, kComposerTemp};
            case Role::Responder: return {response_temperature, kResponseTemp};
            case Role::Judge: return {judge_temperature, kJudgeTemp};
        }
        throw Error("unreachable role");
    }();
    if (stage_default.first) return *stage_default.first;
    if (backend_temperature) return *backend_temperature;
    return stage_default.second;
}

std::string PipelineConfig::role_base_url(Role role) const {
    if (auto it = roles.find(role); it != roles.end() && it->second.base_url) {
        return *it->second.base_url;
    }
    return base_url;
}

std::string PipelineConfig::role_model(Role role) const {
    if (auto it = roles.find(role); it != roles.end() && it->second.model) {
        return *it->second.model;
    }
    return model;
}

int PipelineConfig::role_max_tokens(Role role) const {
    if (auto it = roles.find(role); it != roles.end() && it->second.max_tokens) {
        return *it->second.max_tokens;
    }
    return max_tokens;
}

void PipelineConfig::validate() const {
    if (max_retries < 1) throw ConfigError("backend.max_retries must be >= 1");
    if (parallelism < 1 || parallelism > 256) throw ConfigError("backend.parallelism out of range [1,256]");
    if (max_tokens < 1) throw ConfigError("backend.max_tokens must be >= 1");
    if (retries < 0) throw ConfigError("stages.retries must be >= 0");
    if (k < 1 || k > 64) throw ConfigError("stages.synthesize.k out of range [1,64]");
    if (augment_iterations < 0 || augment_iterations > 3) {
        throw ConfigError("stages.augment.iterations out of range [0,3]");
    }
    if (!(beta > 0.0)) throw ConfigError("stages.emit.beta must be positive");
    if (emit_iterations < 1 || emit_iterations > 10) {
        throw ConfigError("stages.emit.iterations out of range [1,10]");
    }
    if (decontam_n < 1) throw ConfigError("stages.decontam.n must be >= 1");
    if (decontam_max_flagged < 0) throw ConfigError("stages.decontam.max_flagged must be >= 0");
    for (Role role : all_roles()) {
        double t = role_temperature(role);
        if (t < 0.0 || t > 2.0) {
            throw ConfigError("temperature for " + std::string(to_string(role)) +
                              " out of range [0,2]");
        }
        if (role_max_tokens(role) < 1) {
            throw ConfigError("max_tokens for " + std::string(to_string(role)) + " must be >= 1");
        }
    }
}

}  // namespace ultraif
