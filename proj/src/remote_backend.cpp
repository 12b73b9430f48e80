#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <regex>

#include "agentflow/backend.hpp"

namespace agentflow {

namespace {

struct UrlParts {
    std::string base;  // scheme://host[:port]
    std::string path;
};

UrlParts split_url(const std::string& url) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) throw ConfigError("invalid backend endpoint '" + url + "'");
    return {m[1].str(), m[2].matched ? m[2].str() : "/v1/chat/completions"};
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return (v != nullptr && *v != '\0') ? std::string(v) : fallback;
}

}  // namespace

RemoteChatBackend::RemoteChatBackend(BackendProfile profile) : profile_(std::move(profile)) {
    if (profile_.endpoint.empty()) profile_.endpoint = env_or("AGENTFLOW_BACKEND_URL", "");
    api_key_ = env_or("AGENTFLOW_BACKEND_KEY", "");
}

json RemoteChatBackend::request_body(const BackendProfile& profile, const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    json body{{"model", profile.model_name}, {"messages", messages}, {"temperature", request.temperature}};
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
    return body;
}

ChatResponse RemoteChatBackend::parse_response_body(const std::string& body, std::size_t prompt_tokens) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        throw BackendFailure(FailureClass::MalformedResponse, std::string("unparseable response: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
        throw BackendFailure(FailureClass::MalformedResponse, "response has no choices");
    }
    const auto& choice = doc["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
        throw BackendFailure(FailureClass::MalformedResponse, "response choice has no message content");
    }
    ChatResponse r;
    r.message.role = Role::Assistant;
    r.message.content = choice["message"]["content"].get<std::string>();
    const std::string finish = choice.value("finish_reason", "stop");
    r.finish_reason = finish == "length" ? FinishReason::Length
                      : finish == "stop" ? FinishReason::Stop
                                         : FinishReason::Error;
    r.usage.prompt_tokens = prompt_tokens;
    if (doc.contains("usage") && doc["usage"].is_object()) {
        r.usage.prompt_tokens = doc["usage"].value("prompt_tokens", prompt_tokens);
        r.usage.completion_tokens = doc["usage"].value("completion_tokens", std::size_t{0});
    }
    return r;
}

ChatResponse RemoteChatBackend::complete(const ChatRequest& request) {
    if (profile_.endpoint.empty()) {
        throw BackendFailure(FailureClass::Permanent, "no endpoint configured for '" + profile_.id + "'");
    }
    const auto url = split_url(profile_.endpoint);
    httplib::Client client(url.base);
    const auto seconds = static_cast<time_t>(profile_.timeout);
    const auto micros = static_cast<time_t>((profile_.timeout - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto body = request_body(profile_, request).dump();
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        const std::string detail = "request to " + url.base + " failed: " + httplib::to_string(err);
        if (err == httplib::Error::Read || err == httplib::Error::Write) {
            throw BackendFailure(FailureClass::Timeout, detail + " (timed out or connection dropped)");
        }
        // Connection-level failures without a recognizable cause are treated
        // as network trouble rather than a permanent refusal.
        auto cls = classify_failure(RawFailure{std::nullopt, detail});
        if (cls == FailureClass::Permanent) cls = FailureClass::TransientNetwork;
        throw BackendFailure(cls, detail);
    }
    if (res->status >= 400) {
        const std::string detail =
            "HTTP " + std::to_string(res->status) + ": " + truncate_text(res->body, 500);
        throw BackendFailure(classify_failure(RawFailure{res->status, detail}), detail);
    }
    return parse_response_body(res->body, estimate_tokens(request));
}

}  // namespace agentflow
