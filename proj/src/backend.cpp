#include "ultraif/backend.hpp"

#include <atomic>
#include <thread>

#include "ultraif/errors.hpp"
#include "ultraif/jsonl.hpp"

namespace ultraif {

bool ReplayTranscript::insert(const ChatRequest& request, const ChatResponse& response) {
    std::string canonical = canonical_request(request);
    std::string fp = fingerprint(request);
    auto it = entries_.find(fp);
    if (it != entries_.end()) {
        if (it->second.canonical_request != canonical) {
            throw CollisionError("fingerprint collision on " + fp);
        }
        return false;
    }
    entries_.emplace(std::move(fp), TranscriptEntry{std::move(canonical), response});
    return true;
}

const TranscriptEntry* ReplayTranscript::find(const std::string& fp) const {
    auto it = entries_.find(fp);
    return it == entries_.end() ? nullptr : &it->second;
}

void ReplayTranscript::save(const std::filesystem::path& path) const {
    JsonlWriter out(path);
    if (!created_at.empty() || !source_backend.empty()) {
        out.write(json{{"metadata", {{"created_at", created_at}, {"source_backend", source_backend}}}});
    }
    for (const auto& [fp, entry] : entries_) {
        json req = json::parse(entry.canonical_request);
        out.write(json{
            {"fingerprint", fp},
            {"request", std::move(req)},
            {"response", response_to_json(entry.response)},
        });
    }
}

ReplayTranscript ReplayTranscript::load(const std::filesystem::path& path) {
    ReplayTranscript t;
    for (const json& line : read_jsonl(path)) {
        if (line.contains("metadata")) {
            const auto& m = line["metadata"];
            t.created_at = m.value("created_at", std::string{});
            t.source_backend = m.value("source_backend", std::string{});
            continue;
        }
        if (!line.contains("fingerprint") || !line.contains("request") || !line.contains("response")) {
            throw IoError("transcript " + path.string() + ": entry missing fingerprint/request/response");
        }
        std::string fp = line["fingerprint"].get<std::string>();
        std::string canonical = line["request"].dump();
        auto [it, inserted] = t.entries_.emplace(
            fp, TranscriptEntry{std::move(canonical), response_from_json(line["response"])});
        if (!inserted) {
            throw IoError("transcript " + path.string() + ": duplicate fingerprint " + fp);
        }
    }
    return t;
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    request.validate();
    std::string fp = fingerprint(request);
    const TranscriptEntry* entry = transcript_.find(fp);
    if (!entry) {
        throw ReplayMiss("no transcript entry for fingerprint " + fp + " (request: " +
                         canonical_request(request) + ")");
    }
    return entry->response;
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner,
                                   std::shared_ptr<SharedTranscript> store)
    : inner_(std::move(inner)), store_(std::move(store)) {}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
    std::string fp = fingerprint(request);
    {
        std::lock_guard lock(store_->mu);
        if (const TranscriptEntry* hit = store_->transcript.find(fp)) {
            return hit->response;
        }
    }
    // Not held across the network call on purpose.
    ChatResponse response = inner_->complete(request);
    std::lock_guard lock(store_->mu);
    if (const TranscriptEntry* hit = store_->transcript.find(fp)) {
        // A sibling worker recorded the same request first; keep its answer
        // so replay sees exactly one entry.
        return hit->response;
    }
    store_->transcript.insert(request, response);
    return response;
}

std::vector<CompletionOutcome> complete_many(ChatBackend& backend,
                                             const std::vector<ChatRequest>& requests,
                                             int parallelism) {
    if (parallelism < 1) {
        throw InvalidRequest("complete_many: parallelism must be >= 1");
    }
    std::vector<CompletionOutcome> results(requests.size());
    if (requests.empty()) return results;

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                results[i].response = backend.complete(requests[i]);
            } catch (const ReplayMiss& e) {
                results[i] = {std::nullopt, "ReplayMiss", e.what()};
            } catch (const TransportError& e) {
                results[i] = {std::nullopt, "TransportError", e.what()};
            } catch (const ProtocolError& e) {
                results[i] = {std::nullopt, "ProtocolError", e.what()};
            } catch (const Error& e) {
                results[i] = {std::nullopt, "Error", e.what()};
            }
        }
    };

    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism), requests.size());
    if (n_threads <= 1) {
        worker();
        return results;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return results;
}

}  // namespace ultraif
