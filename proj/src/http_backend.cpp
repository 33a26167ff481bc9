#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <random>
#include <thread>

#include "ultraif/errors.hpp"
#include "ultraif/http_backend.hpp"

namespace ultraif {

namespace {

json request_body(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back(json{{"role", m.role}, {"content", m.content}});
    }
    json body{
        {"model", request.model_id},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"n", request.n_samples},
    };
    if (request.seed_hint) {
        body["seed"] = *request.seed_hint;
    }
    return body;
}

ChatResponse parse_completion_payload(const std::string& body, const ChatRequest& request,
                                      const std::string& backend_id) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        throw ProtocolError("provider returned non-JSON body");
    }
    if (!j.contains("choices") || !j["choices"].is_array()) {
        throw ProtocolError("provider payload has no choices array");
    }
    ChatResponse response;
    response.backend_id = backend_id;
    for (const auto& choice : j["choices"]) {
        if (!choice.contains("message") || !choice["message"].contains("content") ||
            !choice["message"]["content"].is_string()) {
            throw ProtocolError("choice missing message.content");
        }
        response.completions.push_back(choice["message"]["content"].get<std::string>());
    }
    if (static_cast<int>(response.completions.size()) != request.n_samples) {
        throw ProtocolError("provider returned " + std::to_string(response.completions.size()) +
                            " completions, requested n=" + std::to_string(request.n_samples));
    }
    if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        response.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
        response.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    }
    return response;
}

int jittered_delay_ms(int base_ms, int attempt, double jitter) {
    thread_local std::mt19937_64 rng(
        static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) ^
        (std::hash<std::thread::id>{}(std::this_thread::get_id()) << 1));
    double factor = static_cast<double>(1 << std::min(attempt, 16));
    std::uniform_real_distribution<double> dist(1.0 - jitter, 1.0 + jitter);
    double ms = static_cast<double>(base_ms) * factor * dist(rng);
    return static_cast<int>(ms);
}

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status <= 599);
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const std::string& url = config_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend base_url must start with http:// or https://: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = url;
    } else {
        scheme_host_ = url.substr(0, path_start);
        path_prefix_ = url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    request.validate();
    const std::string body = request_body(request).dump();
    const std::string path = path_prefix_ + "/chat/completions";

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_failure;
    for (int attempt = 0; attempt < config_.max_retries; ++attempt) {
        if (attempt > 0) {
            telemetry_.retries.fetch_add(1);
            std::this_thread::sleep_for(std::chrono::milliseconds(
                jittered_delay_ms(config_.backoff_base_ms, attempt - 1, config_.backoff_jitter)));
        }
        telemetry_.requests.fetch_add(1);

        httplib::Client client(scheme_host_);
        client.set_connection_timeout(config_.connect_timeout_s, 0);
        client.set_read_timeout(config_.read_timeout_s, 0);

        auto result = client.Post(path, headers, body, "application/json");
        if (!result) {
            last_failure = "transport: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status == 200) {
            return parse_completion_payload(result->body, request, id());
        }
        if (retryable_status(result->status)) {
            last_failure = "status " + std::to_string(result->status);
            continue;
        }
        telemetry_.failures.fetch_add(1);
        throw ProtocolError("provider answered HTTP " + std::to_string(result->status) + ": " +
                            result->body.substr(0, 200));
    }
    telemetry_.failures.fetch_add(1);
    throw TransportError("request failed after " + std::to_string(config_.max_retries) +
                         " attempts, last: " + last_failure);
}

}  // namespace ultraif
