#pragma once

#include <cstdint>
#include <string>

#include "ultraif/backend.hpp"

namespace ultraif {

// Which model answers for a pipeline role, and how it decodes. The pointer is
// non-owning; the pipeline keeps backends alive for the duration of a run.
struct RoleEndpoint {
    ChatBackend* backend = nullptr;
    std::string model_id;
    double temperature = 0.0;
    int max_tokens = 2048;
};

// Knobs shared by every stage driver.
struct StagePolicy {
    // Re-samples allowed after the first attempt when the model's output
    // fails to parse. Backend-level transport retries are separate.
    int retries = 2;
    std::uint64_t stage_seed = 0;
    int parallelism = 4;
};

struct StageCounters {
    std::int64_t processed = 0;
    std::int64_t skipped = 0;
    std::int64_t retried = 0;          // parse-failure re-samples issued
    std::int64_t dropped_questions = 0;
    ChatUsage usage;

    StageCounters& operator+=(const StageCounters& other) {
        processed += other.processed;
        skipped += other.skipped;
        retried += other.retried;
        dropped_questions += other.dropped_questions;
        usage += other.usage;
        return *this;
    }
};

}  // namespace ultraif
