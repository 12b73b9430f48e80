#include "agentflow/retry.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "agentflow/util.hpp"

namespace agentflow {

std::string_view to_string(FailureClass c) {
    switch (c) {
        case FailureClass::TransientNetwork: return "transient-network";
        case FailureClass::RateLimit: return "rate-limit";
        case FailureClass::Timeout: return "timeout";
        case FailureClass::MalformedResponse: return "malformed-response";
        case FailureClass::Permanent: return "permanent";
    }
    return "permanent";
}

std::optional<FailureClass> failure_class_from_string(std::string_view s) {
    for (auto c : {FailureClass::TransientNetwork, FailureClass::RateLimit, FailureClass::Timeout,
                   FailureClass::MalformedResponse, FailureClass::Permanent}) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

std::chrono::milliseconds RetryPolicy::delay_after(int failed_attempt, std::mt19937_64* rng) const {
    if (deterministic_mode) return std::chrono::milliseconds(0);
    double ms = static_cast<double>(base_delay.count()) * std::pow(multiplier, failed_attempt - 1);
    if (rng != nullptr && jitter > 0) {
        std::uniform_real_distribution<double> dist(1.0 - jitter, 1.0 + jitter);
        ms *= dist(*rng);
    }
    return std::chrono::milliseconds(static_cast<long long>(std::max(0.0, ms)));
}

namespace {

FailureClass from_status(int status) {
    if (status == 429) return FailureClass::RateLimit;
    if (status == 408) return FailureClass::Timeout;
    if (status >= 500 && status <= 599) return FailureClass::TransientNetwork;
    return FailureClass::Permanent;
}

bool contains_any(const std::string& text, std::initializer_list<std::string_view> needles) {
    return std::any_of(needles.begin(), needles.end(),
                       [&](std::string_view n) { return text.find(n) != std::string::npos; });
}

}  // namespace

FailureClass classify_failure(const RawFailure& raw) {
    if (raw.status && *raw.status >= 400) return from_status(*raw.status);

    const std::string text = to_lower(raw.message);

    // Status codes embedded in messages: "error 403: Forbidden", "HTTP 503",
    // "status code 429", "429 Too Many Requests".
    static const std::regex kEmbedded(
        R"((?:error|status(?: code)?|http(?:/\d(?:\.\d)?)?|code)[\s:=]*([45]\d\d)\b|\b([45]\d\d)\s*[:\-]?\s*(?:forbidden|unauthorized|not found|too many|bad request|internal|service unavailable|bad gateway|gateway timeout|request timeout))");
    std::smatch m;
    if (std::regex_search(text, m, kEmbedded)) {
        const std::string code = m[1].matched ? m[1].str() : m[2].str();
        return from_status(std::stoi(code));
    }

    if (contains_any(text, {"rate limit", "rate-limit", "ratelimit", "too many requests", "quota exceeded"})) {
        return FailureClass::RateLimit;
    }
    if (contains_any(text, {"unparseable", "malformed", "invalid json", "jsondecodeerror",
                           "json decode", "parse error", "invalid control character",
                           "unexpected token", "empty response"})) {
        return FailureClass::MalformedResponse;
    }
    if (contains_any(text, {"failed to resolve", "name or service not known", "nodename nor servname",
                           "temporary failure in name resolution", "dns", "errno -3",
                           "max retries exceeded", "connection reset", "connection refused",
                           "connection aborted", "broken pipe", "network is unreachable",
                           "temporarily unavailable", "remote end closed", "eof occurred"})) {
        return FailureClass::TransientNetwork;
    }
    if (contains_any(text, {"deadline exceeded", "timed out", "timeout", "time out", "deadline_exceeded"})) {
        return FailureClass::Timeout;
    }
    // Default: unknown failures are not retried.
    return FailureClass::Permanent;
}

}  // namespace agentflow
