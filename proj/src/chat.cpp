#include "ultraif/chat.hpp"

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

namespace ultraif {

void ChatRequest::validate() const {
    if (model_id.empty()) {
        throw InvalidRequest("request: model_id is empty");
    }
    if (messages.empty()) {
        throw InvalidRequest("request: messages are empty");
    }
    const std::string& first = messages.front().role;
    if (first != "system" && first != "user") {
        throw InvalidRequest("request: first message role must be system or user, got '" + first + "'");
    }
    for (const auto& m : messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw InvalidRequest("request: unknown role '" + m.role + "'");
        }
    }
    if (temperature < 0.0) {
        throw InvalidRequest("request: negative temperature");
    }
    if (max_tokens < 1) {
        throw InvalidRequest("request: max_tokens must be positive");
    }
    if (n_samples < 1) {
        throw InvalidRequest("request: n_samples must be positive");
    }
}

json canonical_request_json(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back(json{{"content", m.content}, {"role", m.role}});
    }
    json j{
        {"max_tokens", request.max_tokens},
        {"messages", std::move(messages)},
        {"model", request.model_id},
        {"n", request.n_samples},
        {"temperature", request.temperature},
    };
    if (request.seed_hint) {
        j["seed"] = *request.seed_hint;
    }
    return j;
}

std::string canonical_request(const ChatRequest& request) {
    // nlohmann::json objects keep keys sorted, so dump() is already canonical.
    return canonical_request_json(request).dump();
}

std::string fingerprint(const ChatRequest& request) {
    return sha256_hex(canonical_request(request));
}

json response_to_json(const ChatResponse& response) {
    return json{
        {"backend_id", response.backend_id},
        {"completions", response.completions},
        {"usage", {{"completion_tokens", response.usage.completion_tokens},
                   {"prompt_tokens", response.usage.prompt_tokens}}},
    };
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    if (!j.is_object() || !j.contains("completions") || !j["completions"].is_array()) {
        throw ProtocolError("response record: missing completions array");
    }
    for (const auto& c : j["completions"]) {
        if (!c.is_string()) {
            throw ProtocolError("response record: completion is not a string");
        }
        r.completions.push_back(c.get<std::string>());
    }
    if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        r.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
        r.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    }
    r.backend_id = j.value("backend_id", std::string{});
    return r;
}

}  // namespace ultraif
