#include "agentflow/backend.hpp"

#include <algorithm>
#include <set>
#include <thread>

namespace agentflow {

std::string_view to_string(FinishReason r) {
    switch (r) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::Error: return "error";
    }
    return "stop";
}

json to_json(const BackendProfile& p) {
    json j{{"id", p.id},
           {"kind", p.kind == BackendKind::Scripted ? "scripted" : "remote-chat"},
           {"temperature", p.temperature},
           {"timeout", p.timeout},
           {"max_context_tokens", p.max_context_tokens}};
    if (!p.endpoint.empty()) j["endpoint"] = p.endpoint;
    if (!p.model_name.empty()) j["model"] = p.model_name;
    if (!p.script.empty()) j["script"] = p.script;
    return j;
}

BackendProfile backend_profile_from_json(const json& j) {
    static const std::set<std::string> allowed = {"id",      "kind",        "endpoint",
                                                  "model",   "temperature", "timeout",
                                                  "max_context_tokens", "script"};
    if (!j.is_object()) throw SchemaError("backend profile must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw SchemaError("backend profile: unknown field '" + key + "'");
    }
    if (!j.contains("id")) throw MissingFieldError("id");
    if (!j.contains("kind")) throw MissingFieldError("kind");
    BackendProfile p;
    try {
        p.id = j.at("id").get<std::string>();
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "scripted") p.kind = BackendKind::Scripted;
        else if (kind == "remote-chat") p.kind = BackendKind::RemoteChat;
        else throw SchemaError("backend '" + p.id + "': unknown kind '" + kind + "'");
        p.endpoint = j.value("endpoint", "");
        p.model_name = j.value("model", "");
        p.temperature = j.value("temperature", 0.0);
        p.timeout = j.value("timeout", 60.0);
        p.max_context_tokens = j.value("max_context_tokens", std::size_t{128000});
        p.script = j.value("script", "");
    } catch (const json::type_error& e) {
        throw SchemaError("backend profile: " + std::string(e.what()));
    }
    return p;
}

void check_profile(const BackendProfile& p) {
    if (p.id.empty()) throw ConfigError("backend profile with empty id");
    if (p.temperature < 0) throw ConfigError("backend '" + p.id + "': temperature must be >= 0");
    if (p.max_context_tokens == 0) throw ConfigError("backend '" + p.id + "': max_context_tokens must be > 0");
    if (p.kind == BackendKind::Scripted && p.script.empty()) {
        throw ConfigError("backend '" + p.id + "': scripted backends need a script");
    }
    if (p.kind == BackendKind::RemoteChat) {
        const char* env_url = std::getenv("AGENTFLOW_BACKEND_URL");
        if (p.endpoint.empty() && (env_url == nullptr || *env_url == '\0')) {
            throw ConfigError("backend '" + p.id + "': remote-chat needs an endpoint or AGENTFLOW_BACKEND_URL");
        }
        if (p.model_name.empty()) throw ConfigError("backend '" + p.id + "': remote-chat needs a model");
    }
}

std::vector<BackendProfile> load_backend_profiles(const std::filesystem::path& path) {
    const auto doc = json::parse(std::string(parse_json_document(read_file(path)).dump()));
    const json& list = doc.is_object() && doc.contains("backends") ? doc.at("backends") : doc;
    if (!list.is_array()) throw SchemaError(path.string() + ": expected a list of backend profiles");
    std::vector<BackendProfile> out;
    std::set<std::string> ids;
    for (const auto& item : list) {
        auto p = backend_profile_from_json(item);
        if (!p.script.empty() && std::filesystem::path(p.script).is_relative()) {
            p.script = (path.parent_path() / p.script).lexically_normal().string();
        }
        check_profile(p);
        if (!ids.insert(p.id).second) throw ConfigError("duplicate backend id '" + p.id + "'");
        out.push_back(std::move(p));
    }
    return out;
}

std::size_t estimate_tokens(const ChatRequest& request) {
    std::size_t chars = 0;
    for (const auto& m : request.messages) chars += m.content.size();
    return (chars + 3) / 4;
}

ChatResponse complete_chat(ChatBackend& backend, const ChatRequest& request,
                           const TokenEstimator& estimator) {
    if (request.messages.empty() || request.messages.front().role != Role::System) {
        throw BackendFailure(FailureClass::Permanent, "request must begin with a system message");
    }
    const std::size_t tokens = estimator(request);
    const auto limit = backend.profile().max_context_tokens;
    if (tokens > limit) {
        throw BackendFailure(FailureClass::Permanent,
                             "context length " + std::to_string(tokens) + " tokens exceeds limit " +
                                 std::to_string(limit) + " of backend '" + backend.profile().id + "'");
    }
    return backend.complete(request);
}

// ---- scripts ---------------------------------------------------------------

std::vector<ScriptRule> parse_script(std::string_view document) {
    const ordered_json doc = parse_json_document(document);
    if (!doc.is_array()) throw SchemaError("script: expected a JSON list of rules");
    std::vector<ScriptRule> rules;
    std::size_t index = 0;
    for (const auto& item : doc) {
        const std::string where = "script rule " + std::to_string(index++);
        if (!item.is_object()) throw SchemaError(where + ": expected an object");
        static const std::set<std::string> allowed = {"match",       "response",  "fail_count",
                                                      "fail_class",  "fail_detail", "delay_ms",
                                                      "comment"};
        for (const auto& [key, _] : item.items()) {
            if (!allowed.count(key)) throw SchemaError(where + ": unknown field '" + key + "'");
        }
        ScriptRule r;
        if (!item.contains("match")) throw MissingFieldError(where + ".match");
        const auto& match = item.at("match");
        if (!match.is_object()) throw SchemaError(where + ".match: expected an object");
        int kinds = 0;
        for (const auto& [key, value] : match.items()) {
            if (key == "target") {
                const auto t = value.get<std::string>();
                if (t == "last") r.target = MatchTarget::LastMessage;
                else if (t == "all") r.target = MatchTarget::AllMessages;
                else if (t == "system") r.target = MatchTarget::System;
                else throw SchemaError(where + ".match.target: unknown target '" + t + "'");
                continue;
            }
            if (!value.is_string()) throw SchemaError(where + ".match." + key + ": expected a string");
            if (key == "substring") r.kind = MatchKind::Substring;
            else if (key == "exact") r.kind = MatchKind::Exact;
            else if (key == "regex") r.kind = MatchKind::Regex;
            else throw SchemaError(where + ".match: unknown matcher '" + key + "'");
            r.pattern = value.get<std::string>();
            ++kinds;
        }
        if (kinds != 1) throw SchemaError(where + ".match: exactly one of substring, exact, regex");
        if (r.kind == MatchKind::Regex) {
            try {
                std::regex test(r.pattern);
            } catch (const std::regex_error& e) {
                throw SchemaError(where + ".match.regex: " + e.what());
            }
        }
        if (!item.contains("response")) throw MissingFieldError(where + ".response");
        if (!item.at("response").is_string()) throw SchemaError(where + ".response: expected a string");
        r.response = item.at("response").get<std::string>();
        if (item.contains("fail_count")) {
            if (!item.at("fail_count").is_number_integer() || item.at("fail_count").get<int>() < 0) {
                throw SchemaError(where + ".fail_count: expected a nonnegative integer");
            }
            r.fail_count = item.at("fail_count").get<int>();
        }
        if (item.contains("fail_class")) {
            const auto cls = failure_class_from_string(item.at("fail_class").get<std::string>());
            if (!cls) throw SchemaError(where + ".fail_class: unknown class");
            r.fail_class = *cls;
        }
        if (item.contains("fail_detail")) r.fail_detail = item.at("fail_detail").get<std::string>();
        if (item.contains("delay_ms")) r.delay_ms = item.at("delay_ms").get<int>();
        rules.push_back(std::move(r));
    }
    return rules;
}

std::vector<ScriptRule> load_script(const std::filesystem::path& path) {
    return parse_script(read_file(path));
}

ScriptedBackend::ScriptedBackend(BackendProfile profile, std::vector<ScriptRule> rules)
    : profile_(std::move(profile)), rules_(std::move(rules)), failures_(rules_.size()) {
    for (const auto& r : rules_) {
        if (r.kind == MatchKind::Regex) compiled_.emplace_back(std::regex(r.pattern));
        else compiled_.emplace_back(std::nullopt);
    }
}

namespace {

std::string match_text(const ChatRequest& request, MatchTarget target) {
    if (request.messages.empty()) return {};
    switch (target) {
        case MatchTarget::LastMessage:
            return request.messages.back().content;
        case MatchTarget::System:
            return request.messages.front().role == Role::System ? request.messages.front().content : "";
        case MatchTarget::AllMessages: {
            std::string all;
            for (const auto& m : request.messages) {
                all += m.content;
                all += '\n';
            }
            return all;
        }
    }
    return {};
}

std::string default_detail(FailureClass cls) {
    switch (cls) {
        case FailureClass::TransientNetwork:
            return "HTTPConnectionPool: Max retries exceeded with url (Caused by NameResolutionError: "
                   "Failed to resolve host [Errno -3])";
        case FailureClass::RateLimit: return "429 Too Many Requests: rate limit reached";
        case FailureClass::Timeout: return "deadline exceeded waiting for completion";
        case FailureClass::MalformedResponse: return "unparseable response payload";
        case FailureClass::Permanent: return "403: Forbidden";
    }
    return "failure";
}

}  // namespace

std::optional<std::size_t> ScriptedBackend::match(const ChatRequest& request) const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& r = rules_[i];
        const std::string text = match_text(request, r.target);
        bool hit = false;
        switch (r.kind) {
            case MatchKind::Substring: hit = text.find(r.pattern) != std::string::npos; break;
            case MatchKind::Exact: hit = text == r.pattern; break;
            case MatchKind::Regex: hit = std::regex_search(text, *compiled_[i]); break;
        }
        if (hit) return i;
    }
    return std::nullopt;
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    calls_.fetch_add(1);
    const auto index = match(request);
    if (!index) {
        throw BackendFailure(FailureClass::Permanent,
                             rules_.empty() ? "no rule" : "no rule matched the request");
    }
    const auto& rule = rules_[*index];
    if (rule.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(rule.delay_ms));
    if (rule.fail_count > 0) {
        int seen = failures_[*index].load();
        while (seen < rule.fail_count && !failures_[*index].compare_exchange_weak(seen, seen + 1)) {
        }
        if (seen < rule.fail_count) {
            throw BackendFailure(rule.fail_class,
                                 rule.fail_detail.empty() ? default_detail(rule.fail_class) : rule.fail_detail);
        }
    }
    ChatResponse response;
    response.message.role = Role::Assistant;
    response.message.content = rule.response;
    response.finish_reason = FinishReason::Stop;
    response.usage.prompt_tokens = estimate_tokens(request);
    response.usage.completion_tokens = (rule.response.size() + 3) / 4;
    return response;
}

json ScriptedBackend::save_state() const {
    json failures = json::array();
    for (const auto& f : failures_) failures.push_back(f.load());
    return {{"failures", failures}};
}

void ScriptedBackend::restore_state(const json& state) {
    if (!state.is_object() || !state.contains("failures")) return;
    const auto& failures = state.at("failures");
    for (std::size_t i = 0; i < failures_.size() && i < failures.size(); ++i) {
        failures_[i].store(failures[i].get<int>());
    }
}

std::shared_ptr<ChatBackend> make_backend(const BackendProfile& profile) {
    check_profile(profile);
    if (profile.kind == BackendKind::Scripted) {
        return std::make_shared<ScriptedBackend>(profile, load_script(profile.script));
    }
    return std::make_shared<RemoteChatBackend>(profile);
}

// ---- pool ------------------------------------------------------------------

void BackendPool::add(std::shared_ptr<ChatBackend> backend) {
    const auto id = backend->profile().id;
    if (backends_.count(id)) throw ConfigError("duplicate backend id '" + id + "'");
    order_.push_back(id);
    backends_[id] = std::move(backend);
}

void BackendPool::replace(const std::string& id, std::shared_ptr<ChatBackend> backend) {
    if (!backends_.count(id)) throw ConfigError("unknown backend '" + id + "'");
    backends_[id] = std::move(backend);
}

bool BackendPool::contains(const std::string& id) const { return backends_.count(id) > 0; }

ChatBackend& BackendPool::get(const std::string& id) const { return *shared(id); }

std::shared_ptr<ChatBackend> BackendPool::shared(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end()) throw ConfigError("unknown backend '" + id + "'");
    return it->second;
}

std::vector<std::string> BackendPool::ids() const { return order_; }

bool BackendPool::all_scripted() const {
    return std::all_of(backends_.begin(), backends_.end(),
                       [](const auto& kv) { return kv.second->profile().kind == BackendKind::Scripted; });
}

std::string BackendPool::digest() const {
    json material = json::array();
    for (const auto& id : order_) {
        const auto& p = backends_.at(id)->profile();
        json entry = to_json(p);
        if (!p.script.empty()) {
            try {
                entry["script_digest"] = sha256_hex(read_file(p.script));
            } catch (const StorageError&) {
                entry["script_digest"] = nullptr;
            }
            entry.erase("script");  // location-independent
        }
        material.push_back(entry);
    }
    return sha256_hex(material.dump());
}

json BackendPool::save_state() const {
    json state = json::object();
    for (const auto& id : order_) {
        auto s = backends_.at(id)->save_state();
        if (!s.is_null()) state[id] = std::move(s);
    }
    return state;
}

void BackendPool::restore_state(const json& state) {
    if (!state.is_object()) return;
    for (const auto& [id, s] : state.items()) {
        if (backends_.count(id)) backends_.at(id)->restore_state(s);
    }
}

ChatResponse call_backend(const BackendHandle& handle, const ChatRequest& request) {
    if (handle.backend == nullptr) throw ConfigError("backend handle without a backend");
    NullSink null_sink;
    EventSink& log = handle.log != nullptr ? *handle.log : null_sink;
    const std::string backend_id = handle.backend->profile().id;
    RetryHooks hooks;
    hooks.on_attempt = [&](int attempt, const std::optional<FailureInfo>& failure) {
        json payload{{"phase", "attempt"},
                     {"purpose", handle.purpose},
                     {"backend", backend_id},
                     {"attempt", attempt},
                     {"outcome", failure ? std::string(to_string(failure->cls)) : "ok"}};
        if (failure) payload["detail"] = truncate_text(failure->detail, 300);
        log.emit(EventKind::Turn, handle.node_id, std::move(payload));
    };
    hooks.on_retry = [&](int next, const FailureInfo& cause, std::chrono::milliseconds delay) {
        log.emit(EventKind::Retry, handle.node_id,
                 {{"target", "backend:" + backend_id},
                  {"next_attempt", next},
                  {"cause", to_string(cause.cls)},
                  {"delay_ms", delay.count()}});
    };
    return with_retry(
        handle.policy, [&] { return complete_chat(*handle.backend, request, handle.estimator); }, hooks);
}

}  // namespace agentflow
