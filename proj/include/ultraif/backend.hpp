#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ultraif/chat.hpp"

namespace ultraif {

// Uniform chat-completion access point. Implementations must be safe to call
// from concurrent workers.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

struct TranscriptEntry {
    std::string canonical_request;
    ChatResponse response;
};

// Fingerprint-keyed store of (request, response) pairs, serializable to the
// JSONL transcript format. Not synchronized by itself; RecordingBackend
// guards its shared instance.
class ReplayTranscript {
public:
    // Informational only; never part of any digest.
    std::string created_at;
    std::string source_backend;

    // Stores the pair; rejects a same-fingerprint entry whose canonical
    // request differs (CollisionError). Returns false when the fingerprint
    // was already present with the same canonical bytes.
    bool insert(const ChatRequest& request, const ChatResponse& response);

    const TranscriptEntry* find(const std::string& fp) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    void save(const std::filesystem::path& path) const;
    static ReplayTranscript load(const std::filesystem::path& path);

private:
    std::map<std::string, TranscriptEntry> entries_;  // sorted by fingerprint
};

// Pure lookup against a loaded transcript. Absent fingerprint -> ReplayMiss.
class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(ReplayTranscript transcript) : transcript_(std::move(transcript)) {}

    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return "replay"; }

private:
    ReplayTranscript transcript_;
};

// Transcript store shared by every recorder of one run, so a single file
// captures all roles' traffic.
struct SharedTranscript {
    std::mutex mu;
    ReplayTranscript transcript;
};

// Wraps a live backend and captures every exchange. A repeated fingerprint is
// served from the store without consulting the inner backend, which makes
// recording idempotent under retries of identical requests.
class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<SharedTranscript> store);

    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return inner_->id(); }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<SharedTranscript> store_;
};

// Outcome slot for complete_many: exactly one of response / error is set.
struct CompletionOutcome {
    std::optional<ChatResponse> response;
    std::string error_kind;     // exception class name, empty on success
    std::string error_message;

    bool ok() const { return response.has_value(); }
};

// Runs the requests with at most `parallelism` in flight; results line up
// positionally with the inputs and one failure never aborts the rest.
std::vector<CompletionOutcome> complete_many(ChatBackend& backend,
                                             const std::vector<ChatRequest>& requests,
                                             int parallelism);

}  // namespace ultraif
