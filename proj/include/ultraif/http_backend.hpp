#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "ultraif/backend.hpp"

namespace ultraif {

struct HttpBackendConfig {
    // Endpoint prefix, e.g. "http://localhost:8000/v1"; the client POSTs to
    // {base_url}/chat/completions.
    std::string base_url;
    // Name of the environment variable holding the bearer token. The key is
    // read from the environment on each call and never written anywhere.
    std::string api_key_env = "ULTRAIF_API_KEY";
    int max_retries = 5;  // total attempts, not re-tries after the first
    int backoff_base_ms = 1000;
    double backoff_jitter = 0.2;  // +-20%
    int connect_timeout_s = 15;
    int read_timeout_s = 300;
};

struct HttpTelemetry {
    std::atomic<std::int64_t> requests{0};  // HTTP round trips attempted
    std::atomic<std::int64_t> retries{0};   // round trips beyond the first per call
    std::atomic<std::int64_t> failures{0};  // calls that exhausted the budget
};

// OpenAI-compatible chat-completions client. Retries 429 and 5xx (and
// transport drops) with exponential backoff; other 4xx statuses are
// contract violations and surface immediately as ProtocolError.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return "http:" + config_.base_url; }

    const HttpTelemetry& telemetry() const { return telemetry_; }

private:
    HttpBackendConfig config_;
    std::string scheme_host_;  // scheme://host[:port]
    std::string path_prefix_;  // leading path from base_url, may be empty
    HttpTelemetry telemetry_;
};

}  // namespace ultraif
