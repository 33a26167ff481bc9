#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ultraif/jsonl.hpp"
#include "ultraif/stage.hpp"

namespace ultraif {

enum class StageState { Pending, Running, Done, Failed };

std::string to_string(StageState state);
StageState stage_state_from_string(const std::string& text);

// Bookkeeping for one pipeline stage. A stage counts as complete only when
// state == Done and every file it produced has a digest recorded here.
struct StageEntry {
    StageState state = StageState::Pending;
    StageCounters counters;
    // file name (relative to the run directory) -> sha256 hex of its bytes
    std::map<std::string, std::string> output_digests;
    // stage-specific scalar counts (record yields and the like)
    std::map<std::string, std::int64_t> extra;

    bool done() const { return state == StageState::Done; }
};

// On-disk run state. Deliberately contains no wall-clock data so that two
// runs with the same config, seed, and transcript produce identical bytes.
struct RunManifest {
    std::string run_id;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::vector<std::string> requested_stages;
    std::map<std::string, StageEntry> stages;
    // logical input name ("corpus", "replay_transcript") -> sha256 hex
    std::map<std::string, std::string> input_digests;

    bool stage_done(const std::string& name) const;
    StageEntry& stage(const std::string& name) { return stages[name]; }
};

std::string make_run_id(const std::string& config_digest, std::uint64_t seed);

json manifest_to_json(const RunManifest& manifest);
// Throws CorruptManifest when the document is not a well-formed manifest.
RunManifest manifest_from_json(const json& doc);

void save_manifest(const RunManifest& manifest, const std::string& path);
RunManifest load_manifest(const std::string& path);

}  // namespace ultraif
