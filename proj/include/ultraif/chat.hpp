#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ultraif/jsonl.hpp"

namespace ultraif {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    ChatUsage& operator+=(const ChatUsage& other) {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }
    bool operator==(const ChatUsage&) const = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    int n_samples = 1;
    // Deterministic per-call salt. Distinguishes otherwise identical requests
    // (retry attempts, sequential samples) in transcripts, and is forwarded
    // to providers that honor a seed.
    std::optional<std::int64_t> seed_hint;

    // Throws InvalidRequest when the documented invariants fail.
    void validate() const;
};

struct ChatResponse {
    std::vector<std::string> completions;
    ChatUsage usage;
    std::string backend_id;

    bool operator==(const ChatResponse&) const = default;
};

// Canonical JSON rendering: sorted keys, compact separators, message content
// bytes untouched. Two logically equal requests always canonicalize to the
// same bytes, independent of how they were built.
json canonical_request_json(const ChatRequest& request);
std::string canonical_request(const ChatRequest& request);

// SHA-256 hex of the canonical rendering; the replay-transcript key.
std::string fingerprint(const ChatRequest& request);

json response_to_json(const ChatResponse& response);
ChatResponse response_from_json(const json& j);

}  // namespace ultraif
