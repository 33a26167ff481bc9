#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ultraif/decontam.hpp"
#include "ultraif/emit.hpp"
#include "ultraif/jsonl.hpp"

namespace ultraif {

// The five model roles the pipeline talks to. Two supervision setups are two
// configs: point every role at one endpoint for self-alignment, or split
// them across models of different strength.
enum class Role { Decomposer, QuestionGen, Composer, Responder, Judge };

std::string_view to_string(Role role);
const std::vector<Role>& all_roles();

struct EndpointOverride {
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
};

struct PipelineConfig {
    // backend.* defaults, overridable per role.
    std::string base_url;
    std::string model;
    std::optional<double> backend_temperature;
    int max_retries = 5;
    int parallelism = 4;
    int max_tokens = 2048;
    bool use_n_samples = true;

    std::map<Role, EndpointOverride> roles;

    // Stage parameters.
    int retries = 2;
    std::optional<double> decompose_temperature;   // default 0.0
    std::optional<double> question_temperature;    // default 0.0
    std::optional<double> composer_temperature;    // default 0.7
    std::optional<double> response_temperature;    // default 0.8
    std::optional<double> judge_temperature;       // default 0.0

    int augment_iterations = 3;                    // used when mix is empty
    std::map<int, double> augment_mix;

    int k = 4;

    double beta = 0.1;
    int emit_iterations = 3;
    bool nca_final = true;
    EmitFormat emit_format = EmitFormat::Both;

    int decontam_n = 13;
    FieldMode decontam_fields = FieldMode::Both;
    int decontam_max_flagged = 20;
    std::vector<std::pair<std::string, std::string>> benchmarks;  // name -> path

    // Paths and run identity.
    std::string input_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::string replay_path;  // non-empty: serve every role from this transcript
    std::string record_path;  // non-empty: record live traffic here

    static PipelineConfig from_json(const json& j);
    static PipelineConfig load(const std::filesystem::path& path);

    // Fully materialized form (defaults resolved into concrete values);
    // dump() of this is the digest input, so byte-stable.
    json to_json() const;
    std::string digest() const;

    double role_temperature(Role role) const;
    std::string role_base_url(Role role) const;
    std::string role_model(Role role) const;
    int role_max_tokens(Role role) const;

    // Range checks beyond parse-time shape checks. Throws ConfigError.
    void validate() const;
};

}  // namespace ultraif
