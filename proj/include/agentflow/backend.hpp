#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "agentflow/events.hpp"
#include "agentflow/message.hpp"
#include "agentflow/retry.hpp"

namespace agentflow {

enum class BackendKind { RemoteChat, Scripted };

struct BackendProfile {
    std::string id;
    BackendKind kind = BackendKind::Scripted;
    std::string endpoint;    // remote-chat: full chat-completions URL
    std::string model_name;  // remote-chat
    double temperature = 0.0;
    double timeout = 60.0;  // seconds
    std::size_t max_context_tokens = 128000;
    std::string script;  // scripted: path to the rules file

    bool operator==(const BackendProfile&) const = default;
};

json to_json(const BackendProfile& p);
BackendProfile backend_profile_from_json(const json& j);

// Reads a JSON list of profiles (or {"backends": [...]}) and checks the
// per-kind invariants. Relative script paths are resolved against the
// file's directory.
std::vector<BackendProfile> load_backend_profiles(const std::filesystem::path& path);
void check_profile(const BackendProfile& p);

struct ChatRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    std::optional<int> max_tokens;
};

enum class FinishReason { Stop, Length, Error };
std::string_view to_string(FinishReason r);

struct Usage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct ChatResponse {
    Message message;
    FinishReason finish_reason = FinishReason::Stop;
    Usage usage;
};

using TokenEstimator = std::function<std::size_t(const ChatRequest&)>;

// Default estimator: total characters / 4, rounded up.
std::size_t estimate_tokens(const ChatRequest& request);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual const BackendProfile& profile() const = 0;
    // One raw completion attempt; throws BackendFailure.
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    // Mutable state (fail counters) captured in checkpoints.
    virtual json save_state() const { return nullptr; }
    virtual void restore_state(const json&) {}
};

// Validates the request, enforces the context limit without contacting the
// backend, then performs one completion. Throws BackendFailure.
ChatResponse complete_chat(ChatBackend& backend, const ChatRequest& request,
                           const TokenEstimator& estimator = estimate_tokens);

// ---- scripted backend ----------------------------------------------------

enum class MatchKind { Substring, Exact, Regex };
// What part of the request a rule inspects.
enum class MatchTarget { LastMessage, AllMessages, System };

struct ScriptRule {
    MatchKind kind = MatchKind::Substring;
    std::string pattern;
    MatchTarget target = MatchTarget::LastMessage;
    std::string response;
    int fail_count = 0;
    FailureClass fail_class = FailureClass::TransientNetwork;
    std::string fail_detail;
    int delay_ms = 0;
};

// Parses a JSON rules list. Throws SyntaxError (with location) on bad JSON
// and SchemaError on a bad rule shape.
std::vector<ScriptRule> parse_script(std::string_view document);
std::vector<ScriptRule> load_script(const std::filesystem::path& path);

// First matching rule wins. A rule with fail_count = k fails its first k
// matches with fail_class, then answers. Counters are atomic.
class ScriptedBackend final : public ChatBackend {
public:
    ScriptedBackend(BackendProfile profile, std::vector<ScriptRule> rules);

    const BackendProfile& profile() const override { return profile_; }
    ChatResponse complete(const ChatRequest& request) override;
    json save_state() const override;
    void restore_state(const json& state) override;

    const std::vector<ScriptRule>& rules() const { return rules_; }
    // Index of the rule that would answer `request`, if any.
    std::optional<std::size_t> match(const ChatRequest& request) const;
    std::size_t calls() const { return calls_.load(); }

private:
    BackendProfile profile_;
    std::vector<ScriptRule> rules_;
    std::vector<std::optional<std::regex>> compiled_;
    std::vector<std::atomic<int>> failures_;
    std::atomic<std::size_t> calls_{0};
};

// ---- remote chat-completions backend --------------------------------------

// Speaks the common chat-completions HTTP shape. Endpoint and API key fall
// back to AGENTFLOW_BACKEND_URL / AGENTFLOW_BACKEND_KEY.
class RemoteChatBackend final : public ChatBackend {
public:
    explicit RemoteChatBackend(BackendProfile profile);

    const BackendProfile& profile() const override { return profile_; }
    ChatResponse complete(const ChatRequest& request) override;

    static json request_body(const BackendProfile& profile, const ChatRequest& request);
    static ChatResponse parse_response_body(const std::string& body, std::size_t prompt_tokens);

private:
    BackendProfile profile_;
    std::string api_key_;
};

std::shared_ptr<ChatBackend> make_backend(const BackendProfile& profile);

// Owns the backends of one run, keyed by profile id.
class BackendPool {
public:
    void add(std::shared_ptr<ChatBackend> backend);
    // Swaps in a decorator (fault injection) under the same id.
    void replace(const std::string& id, std::shared_ptr<ChatBackend> backend);
    bool contains(const std::string& id) const;
    ChatBackend& get(const std::string& id) const;  // throws ConfigError
    std::shared_ptr<ChatBackend> shared(const std::string& id) const;
    std::vector<std::string> ids() const;

    bool all_scripted() const;
    // Digest over profiles plus script file contents.
    std::string digest() const;
    json save_state() const;
    void restore_state(const json& state);

private:
    std::vector<std::string> order_;
    std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
};

// A backend bound to the retry policy and log of the calling context.
struct BackendHandle {
    ChatBackend* backend = nullptr;
    RetryPolicy policy;
    EventSink* log = nullptr;
    std::string node_id;
    std::string purpose = "turn";  // recorded in attempt events
    TokenEstimator estimator = estimate_tokens;
};

// complete_chat under with_retry. Every attempt is logged as a `turn`
// event with phase "attempt"; every scheduled retry as a `retry` event.
// Throws RetriesExhausted or Nonretryable.
ChatResponse call_backend(const BackendHandle& handle, const ChatRequest& request);

}  // namespace agentflow
