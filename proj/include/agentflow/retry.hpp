#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <type_traits>

#include "agentflow/errors.hpp"

namespace agentflow {

enum class FailureClass {
    TransientNetwork,
    RateLimit,
    Timeout,
    MalformedResponse,
    Permanent,
};

std::string_view to_string(FailureClass c);
std::optional<FailureClass> failure_class_from_string(std::string_view s);

struct FailureInfo {
    FailureClass cls = FailureClass::Permanent;
    std::string detail;

    bool operator==(const FailureInfo&) const = default;
};

// Raw description of something that went wrong before classification.
struct RawFailure {
    std::optional<int> status;  // HTTP-style status code when known
    std::string message;
};

// Total, deterministic mapping from raw failures to classes.
FailureClass classify_failure(const RawFailure& raw);

inline FailureClass classify_failure(std::string_view message) {
    return classify_failure(RawFailure{std::nullopt, std::string(message)});
}

// Base for failures that carry a class and may be retried.
class ClassifiedFailure : public Error {
public:
    ClassifiedFailure(const std::string& prefix, FailureInfo info)
        : Error(prefix + " (" + std::string(to_string(info.cls)) + "): " + info.detail),
          info_(std::move(info)) {}

    const FailureInfo& info() const noexcept { return info_; }
    FailureClass cls() const noexcept { return info_.cls; }

private:
    FailureInfo info_;
};

class BackendFailure : public ClassifiedFailure {
public:
    explicit BackendFailure(FailureInfo info) : ClassifiedFailure("backend failure", std::move(info)) {}
    BackendFailure(FailureClass cls, std::string detail)
        : BackendFailure(FailureInfo{cls, std::move(detail)}) {}
};

class ToolFailure : public ClassifiedFailure {
public:
    explicit ToolFailure(FailureInfo info) : ClassifiedFailure("tool failure", std::move(info)) {}
    ToolFailure(FailureClass cls, std::string detail)
        : ToolFailure(FailureInfo{cls, std::move(detail)}) {}
};

class RetriesExhausted : public Error {
public:
    RetriesExhausted(FailureInfo last, int attempts)
        : Error("retries exhausted after " + std::to_string(attempts) + " attempts: " + last.detail),
          last_(std::move(last)), attempts_(attempts) {}
    const FailureInfo& last_failure() const noexcept { return last_; }
    int attempts() const noexcept { return attempts_; }

private:
    FailureInfo last_;
    int attempts_;
};

class Nonretryable : public Error {
public:
    Nonretryable(FailureInfo failure, int attempts)
        : Error("non-retryable failure (" + std::string(to_string(failure.cls)) + "): " + failure.detail),
          failure_(std::move(failure)), attempts_(attempts) {}
    const FailureInfo& failure() const noexcept { return failure_; }
    int attempts() const noexcept { return attempts_; }

private:
    FailureInfo failure_;
    int attempts_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    double multiplier = 2.0;
    std::set<FailureClass> retryable_classes{FailureClass::TransientNetwork, FailureClass::RateLimit,
                                             FailureClass::Timeout, FailureClass::MalformedResponse};
    bool deterministic_mode = false;  // zero delays, no jitter
    double jitter = 0.2;              // +/- fraction applied in live mode

    bool is_retryable(FailureClass c) const { return retryable_classes.count(c) > 0; }
    // Delay before the attempt following `failed_attempt` (1-based).
    std::chrono::milliseconds delay_after(int failed_attempt, std::mt19937_64* rng = nullptr) const;
};

struct RetryHooks {
    // Called once per attempt with its 1-based number and the failure, if any.
    std::function<void(int attempt, const std::optional<FailureInfo>& failure)> on_attempt;
    // Called before sleeping ahead of attempt `next_attempt`.
    std::function<void(int next_attempt, const FailureInfo& cause, std::chrono::milliseconds delay)>
        on_retry;
    std::function<void(std::chrono::milliseconds)> sleep;
    std::mt19937_64* rng = nullptr;
};

// Runs `attempt` until it succeeds, fails with a class outside the
// retryable set (Nonretryable), or uses max_attempts attempts
// (RetriesExhausted). Only ClassifiedFailure is retried; any other
// exception propagates unchanged.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& attempt, const RetryHooks& hooks = {})
    -> std::invoke_result_t<Fn&> {
    if (policy.max_attempts < 1) throw ConfigError("retry policy needs max_attempts >= 1");
    for (int n = 1;; ++n) {
        FailureInfo failure;
        try {
            if constexpr (std::is_void_v<std::invoke_result_t<Fn&>>) {
                attempt();
                if (hooks.on_attempt) hooks.on_attempt(n, std::nullopt);
                return;
            } else {
                auto result = attempt();
                if (hooks.on_attempt) hooks.on_attempt(n, std::nullopt);
                return result;
            }
        } catch (const ClassifiedFailure& f) {
            failure = f.info();
        }
        if (hooks.on_attempt) hooks.on_attempt(n, failure);
        if (!policy.is_retryable(failure.cls)) throw Nonretryable(failure, n);
        if (n >= policy.max_attempts) throw RetriesExhausted(failure, n);
        const auto delay = policy.delay_after(n, hooks.rng);
        if (hooks.on_retry) hooks.on_retry(n + 1, failure, delay);
        if (delay.count() > 0) {
            if (hooks.sleep) hooks.sleep(delay);
            else std::this_thread::sleep_for(delay);
        }
    }
}

}  // namespace agentflow
