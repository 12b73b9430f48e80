#include "agentflow/tools.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csignal>
#include <cstring>
#include <future>
#include <regex>
#include <set>
#include <thread>

extern char** environ;

namespace agentflow {

namespace {

constexpr std::size_t kMaxDetailChars = 600;
constexpr std::size_t kMaxObservationChars = 20000;

const std::vector<std::pair<FieldType, std::string_view>>& field_type_names() {
    static const std::vector<std::pair<FieldType, std::string_view>> names = {
        {FieldType::String, "string"},   {FieldType::Integer, "integer"}, {FieldType::Number, "number"},
        {FieldType::Boolean, "boolean"}, {FieldType::List, "list"},       {FieldType::Object, "object"},
    };
    return names;
}

std::string json_type_name(const json& v) {
    if (v.is_string()) return "string";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_boolean()) return "boolean";
    if (v.is_array()) return "list";
    if (v.is_object()) return "object";
    return "null";
}

bool conforms(const json& v, FieldType t) {
    switch (t) {
        case FieldType::String: return v.is_string();
        case FieldType::Integer: return v.is_number_integer();
        case FieldType::Number: return v.is_number();
        case FieldType::Boolean: return v.is_boolean();
        case FieldType::List: return v.is_array();
        case FieldType::Object: return v.is_object();
    }
    return false;
}

std::string tagged(FaultType t, const std::string& body) { return fault_summary(t, body); }

FaultContext context_of(const ToolInvocation& inv) { return {inv.tool_id(), arguments_digest(inv.arguments)}; }

bool is_file_not_found(const std::string& lowered) {
    return lowered.find("no such file or directory") != std::string::npos ||
           lowered.find("can't open file") != std::string::npos ||
           lowered.find("file not found") != std::string::npos ||
           lowered.find("filenotfound") != std::string::npos || lowered.find("errno 2") != std::string::npos;
}

std::string quoted_path(const std::string& detail) {
    static const std::regex kQuoted(R"('([^']+)')");
    std::smatch m;
    if (std::regex_search(detail, m, kQuoted)) return m[1].str();
    return {};
}

}  // namespace

std::string fault_summary(FaultType type, std::string_view body) {
    std::string summary = "[" + std::string(to_string(type)) + "] " + std::string(body) +
                          " Remedy: " + std::string(remedy_for(type)) + ".";
    if (summary.size() > kMaxFaultSummaryChars) summary = truncate_text(summary, kMaxFaultSummaryChars - 20);
    return summary;
}

std::string_view to_string(FieldType t) {
    for (const auto& [type, name] : field_type_names()) {
        if (type == t) return name;
    }
    return "string";
}

std::optional<FieldType> field_type_from_string(std::string_view s) {
    for (const auto& [type, name] : field_type_names()) {
        if (name == s) return type;
    }
    if (s == "array") return FieldType::List;
    return std::nullopt;
}

std::vector<std::string> ToolContract::required_fields() const {
    std::vector<std::string> out;
    for (const auto& f : input_schema) {
        if (f.required) out.push_back(f.name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

json to_json(const ToolContract& c) {
    json schema = json::array();
    for (const auto& f : c.input_schema) {
        json field{{"name", f.name}, {"type", to_string(f.type)}, {"required", f.required}};
        if (!f.description.empty()) field["description"] = f.description;
        schema.push_back(field);
    }
    return {{"server_name", c.server_name}, {"tool_name", c.tool_name}, {"description", c.description},
            {"input_schema", schema},       {"fallbacks", c.fallbacks}};
}

ToolContract tool_contract_from_json(const json& j) {
    ToolContract c;
    if (!j.contains("server_name")) throw MissingFieldError("server_name");
    if (!j.contains("tool_name")) throw MissingFieldError("tool_name");
    try {
        c.server_name = j.at("server_name").get<std::string>();
        c.tool_name = j.at("tool_name").get<std::string>();
        c.description = j.value("description", "");
        c.fallbacks = j.value("fallbacks", std::vector<std::string>{});
        for (const auto& f : j.value("input_schema", json::array())) {
            FieldDescriptor d;
            d.name = f.at("name").get<std::string>();
            const auto type = field_type_from_string(f.value("type", "string"));
            if (!type) throw SchemaError("tool '" + c.tool_id() + "': unknown field type for '" + d.name + "'");
            d.type = *type;
            d.required = f.value("required", true);
            d.description = f.value("description", "");
            c.input_schema.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        throw SchemaError("tool contract: " + std::string(e.what()));
    }
    return c;
}

json contract_json_schema(const ToolContract& c) {
    json properties = json::object();
    json required = json::array();
    for (const auto& f : c.input_schema) {
        std::string type(to_string(f.type));
        if (f.type == FieldType::List) type = "array";
        json prop{{"type", type}};
        if (!f.description.empty()) prop["description"] = f.description;
        properties[f.name] = prop;
        if (f.required) required.push_back(f.name);
    }
    return {{"name", c.tool_name},
            {"description", c.description},
            {"schema", {{"type", "object"}, {"properties", properties}, {"required", required}}}};
}

// ---- registry ------------------------------------------------------------

void ToolRegistry::add(ToolContract contract, ToolImpl impl, bool concurrent_safe) {
    const auto id = contract.tool_id();
    if (bindings_.count(id)) throw DuplicateToolError(id);
    order_.push_back(id);
    bindings_.emplace(id, Binding{std::move(contract), std::move(impl), concurrent_safe});
}

void ToolRegistry::replace_impl(std::string_view tool_id, ToolImpl impl) {
    auto it = bindings_.find(tool_id);
    if (it == bindings_.end()) throw ConfigError("unknown tool '" + std::string(tool_id) + "'");
    it->second.impl = std::move(impl);
}

const ToolContract* ToolRegistry::find(std::string_view tool_id) const {
    auto it = bindings_.find(tool_id);
    return it == bindings_.end() ? nullptr : &it->second.contract;
}

const ToolContract* ToolRegistry::find(std::string_view server, std::string_view tool) const {
    return find(std::string(server) + "/" + std::string(tool));
}

const ToolImpl& ToolRegistry::impl(std::string_view tool_id) const {
    auto it = bindings_.find(tool_id);
    if (it == bindings_.end()) throw ConfigError("unknown tool '" + std::string(tool_id) + "'");
    return it->second.impl;
}

bool ToolRegistry::concurrent_safe(std::string_view tool_id) const {
    auto it = bindings_.find(tool_id);
    return it != bindings_.end() && it->second.concurrent_safe;
}

std::vector<std::string> ToolRegistry::ids() const { return order_; }

// ---- validation and artifacts ---------------------------------------------

std::string arguments_digest(const json& arguments) { return sha256_hex(arguments.dump()); }

std::optional<FaultArtifact> validate_arguments(const ToolContract& contract, const ToolInvocation& invocation) {
    std::vector<std::string> problems;
    const json& args = invocation.arguments;
    if (!args.is_object()) {
        problems.push_back("arguments must be a JSON object");
    } else {
        for (const auto& f : contract.input_schema) {
            if (!args.contains(f.name)) {
                if (f.required) {
                    problems.push_back("missing required field '" + f.name + "' (" + std::string(to_string(f.type)) + ")");
                }
                continue;
            }
            const auto& v = args.at(f.name);
            if (!conforms(v, f.type)) {
                problems.push_back("field '" + f.name + "' expects " + std::string(to_string(f.type)) +
                                   " but got " + json_type_name(v));
            }
        }
        for (const auto& [key, _] : args.items()) {
            const bool declared = std::any_of(contract.input_schema.begin(), contract.input_schema.end(),
                                              [&](const FieldDescriptor& f) { return f.name == key; });
            if (!declared) problems.push_back("unexpected field '" + key + "'");
        }
    }
    if (problems.empty()) return std::nullopt;
    std::string listed;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        if (i > 0) listed += "; ";
        listed += problems[i];
    }
    return FaultArtifact{
        FaultType::InvalidArguments,
        tagged(FaultType::InvalidArguments,
               "The call to " + contract.tool_id() + " has invalid arguments: " + listed +
                   ". The tool was not executed. This is a problem with the call, not with the data; do not "
                   "guess or use placeholder values for missing inputs."),
        context_of(invocation)};
}

FaultArtifact isolate_fault(const FailureInfo& failure, const ToolInvocation& invocation) {
    const std::string detail = truncate_text(failure.detail, kMaxDetailChars);
    const std::string lowered = to_lower(failure.detail);
    const std::string tool = invocation.tool_id();

    if (lowered.find("error parsing tool arguments") != std::string::npos) {
        return {FaultType::MalformedCall,
                tagged(FaultType::MalformedCall,
                       "The arguments of the call to " + tool + " could not be parsed: " + detail +
                           ". The tool did not run; the environment is working. Escape quotes, newlines and "
                           "control characters inside JSON strings and re-issue the call."),
                context_of(invocation)};
    }
    if (failure.cls == FailureClass::Permanent && is_file_not_found(lowered)) {
        const std::string path = quoted_path(failure.detail);
        return {FaultType::InvalidArguments,
                tagged(FaultType::InvalidArguments,
                       "The call to " + tool + " could not open the file" +
                           (path.empty() ? std::string() : " '" + path + "'") + ": " + detail +
                           ". This is a system error caused by the preceding calls, not a data issue: the file "
                           "is not where the tool looked. Check the upload step (upload_file_to_sandbox needs "
                           "local_path and sandbox_path), upload the file, then repeat this call."),
                context_of(invocation)};
    }
    switch (failure.cls) {
        case FailureClass::TransientNetwork:
        case FailureClass::RateLimit:
        case FailureClass::Timeout:
        case FailureClass::MalformedResponse:
            return {FaultType::TransientFailure,
                    tagged(FaultType::TransientFailure,
                           "The call to " + tool + " failed with a temporary " +
                               std::string(to_string(failure.cls)) + " error: " + detail +
                               ". The arguments were accepted; the source is currently unreachable. "
                               "If it stays unreachable, use an alternative source."),
                    context_of(invocation)};
        case FailureClass::Permanent:
            break;
    }
    return {FaultType::PermanentFailure,
            tagged(FaultType::PermanentFailure,
                   "The call to " + tool + " was refused: " + detail +
                       ". Repeating the same call will not succeed."),
            context_of(invocation)};
}

FaultArtifact malformed_call_artifact(const MalformedCall& error, std::string_view raw_text) {
    std::string guidance;
    if (error.reason() == "unclosed block") {
        guidance = "The closing tag </use_mcp_tool> is missing. The tool was not executed and no data was "
                   "accessed; this is not a data access failure. Re-emit the complete block ending with "
                   "</use_mcp_tool>.";
    } else if (error.reason() == "invalid arguments") {
        guidance = "The text inside <arguments> is not a valid JSON object (" +
                   truncate_text(error.detail(), kMaxDetailChars) +
                   "). Escape quotes, newlines and control characters inside strings (write \\n for line "
                   "breaks) and re-emit the call.";
    } else {
        guidance = "Problem: " + error.reason() +
                   (error.detail().empty() ? std::string() : " (" + error.detail() + ")") +
                   ". Use the tags in the order <server_name>, <tool_name>, <arguments> inside one "
                   "<use_mcp_tool> block.";
    }
    return {FaultType::MalformedCall,
            tagged(FaultType::MalformedCall, "The tool call could not be parsed: " + error.reason() + ". " + guidance),
            {"", sha256_hex(raw_text)}};
}

FaultArtifact multiple_calls_artifact(const MultipleCalls& error, std::string_view raw_text) {
    return {FaultType::MalformedCall,
            tagged(FaultType::MalformedCall,
                   "The message contained " + std::to_string(error.count()) +
                       " tool calls, but exactly one tool call per message is allowed. None of them was "
                       "executed. Issue a single call and wait for its result."),
            {"", sha256_hex(raw_text)}};
}

FaultArtifact malformed_turn_artifact(std::string_view raw_text) {
    return {FaultType::MalformedCall,
            tagged(FaultType::MalformedCall,
                   "The response contained neither a tool call nor a final answer. Either issue exactly one "
                   "<use_mcp_tool> block or give the final answer as \\boxed{...}."),
            {"", sha256_hex(raw_text)}};
}

FaultArtifact unavailable_artifact(const ToolInvocation& invocation, std::string_view reason) {
    return {FaultType::ToolUnavailable,
            tagged(FaultType::ToolUnavailable,
                   "The tool " + invocation.tool_id() + " is not available: " + std::string(reason) +
                       ". Only the listed tools exist."),
            context_of(invocation)};
}

FaultArtifact budget_exceeded_artifact(std::string_view budget_kind, double limit, const FaultContext& context,
                                       std::string_view detail) {
    std::string body = "The " + std::string(budget_kind) + " budget is exhausted (limit " + format_number(limit) + ")";
    if (!detail.empty()) body += ": " + std::string(detail);
    body += ". No further work of this kind will be started.";
    return {FaultType::BudgetExceeded, tagged(FaultType::BudgetExceeded, body), context};
}

FaultArtifact backend_fault_artifact(FaultType type, const FailureInfo& failure, std::string_view node_id) {
    const std::string detail = truncate_text(failure.detail, kMaxDetailChars);
    std::string body = "The model backend of agent '" + std::string(node_id) + "' failed (" +
                       std::string(to_string(failure.cls)) + "): " + detail + ".";
    return {type, tagged(type, body), {"backend:" + std::string(node_id), ""}};
}

std::string render_fault(const FaultArtifact& fault) { return "Tool call failed. " + fault.summary; }

std::string render_observation(const ToolInvocation& invocation, const ToolOutcome& outcome) {
    if (!outcome.is_ok()) return render_fault(*outcome.fault);
    return "Result of " + invocation.tool_id() + ":\n" + truncate_text(outcome.payload, kMaxObservationChars);
}

// ---- invocation ----------------------------------------------------------

namespace {

std::string run_isolated(const ToolImpl& impl, const json& arguments, std::chrono::milliseconds timeout,
                         const std::string& tool_id) {
    auto promise = std::make_shared<std::promise<std::string>>();
    auto future = promise->get_future();
    std::thread([impl, arguments, promise] {
        try {
            promise->set_value(impl(arguments));
        } catch (...) {
            promise->set_exception(std::current_exception());
        }
    }).detach();
    if (future.wait_for(timeout) == std::future_status::timeout) {
        throw ToolFailure(FailureClass::Timeout,
                          "tool " + tool_id + " timed out after " + std::to_string(timeout.count()) + " ms");
    }
    try {
        return future.get();
    } catch (const ClassifiedFailure& f) {
        throw ToolFailure(f.info());
    } catch (const std::exception& e) {
        throw ToolFailure(classify_failure(e.what()), e.what());
    } catch (...) {
        throw ToolFailure(FailureClass::Permanent, "tool " + tool_id + " raised a non-standard exception");
    }
}

struct Attempted {
    std::optional<std::string> payload;
    std::optional<FailureInfo> failure;
};

Attempted attempt_tool(const ToolRegistry& registry, const std::string& tool_id, const ToolInvocation& inv,
                       const RetryPolicy& retry, EventSink& log, const std::string& node_id) {
    const ToolImpl& impl = registry.impl(tool_id);
    const std::string digest = arguments_digest(inv.arguments);
    auto started = std::chrono::steady_clock::now();
    RetryHooks hooks;
    hooks.on_attempt = [&](int attempt, const std::optional<FailureInfo>& failure) {
        const auto now = std::chrono::steady_clock::now();
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - started).count();
        started = now;
        json payload{{"tool", tool_id},
                     {"attempt", attempt},
                     {"arguments_digest", digest},
                     {"outcome", failure ? std::string(to_string(failure->cls)) : "ok"}};
        if (failure) payload["detail"] = truncate_text(failure->detail, 300);
        log.emit(EventKind::ToolAttempt, node_id, std::move(payload), {{"duration_ms", ms}});
    };
    hooks.on_retry = [&](int next, const FailureInfo& cause, std::chrono::milliseconds delay) {
        log.emit(EventKind::Retry, node_id,
                 {{"target", "tool:" + tool_id},
                  {"next_attempt", next},
                  {"cause", to_string(cause.cls)},
                  {"delay_ms", delay.count()}});
    };
    try {
        return {with_retry(
                    retry, [&] { return run_isolated(impl, inv.arguments, registry.timeout, tool_id); }, hooks),
                std::nullopt};
    } catch (const RetriesExhausted& e) {
        return {std::nullopt, e.last_failure()};
    } catch (const Nonretryable& e) {
        return {std::nullopt, e.failure()};
    }
}

void emit_fault(EventSink& log, const std::string& node_id, const FaultArtifact& fault) {
    log.emit(EventKind::Fault, node_id, {{"origin", "tool"}, {"fault", to_json(fault)}});
}

ToolOutcome invoke_unchecked(const ToolRegistry& registry, const ToolInvocation& inv, const RetryPolicy& retry,
                             EventSink& log, const std::string& node_id) {
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    };
    const ToolContract* primary = registry.find(inv.tool_id());
    if (primary == nullptr) {
        auto fault = unavailable_artifact(inv, "no tool with this server_name and tool_name is registered");
        emit_fault(log, node_id, fault);
        return ToolOutcome::failed(std::move(fault), elapsed());
    }
    if (auto bad = validate_arguments(*primary, inv)) {
        emit_fault(log, node_id, *bad);
        return ToolOutcome::failed(std::move(*bad), elapsed());
    }

    auto result = attempt_tool(registry, primary->tool_id(), inv, retry, log, node_id);
    if (result.payload) return ToolOutcome::ok(std::move(*result.payload), elapsed());

    FailureInfo last = *result.failure;
    std::string previous = primary->tool_id();
    for (const auto& fallback_id : primary->fallbacks) {
        const ToolContract* fallback = registry.find(fallback_id);
        std::string skip;
        if (fallback == nullptr) skip = "not registered";
        else if (fallback->required_fields() != primary->required_fields()) skip = "incompatible input schema";
        else if (validate_arguments(*fallback, inv)) skip = "arguments do not conform to its schema";
        json payload{{"from", previous}, {"to", fallback_id}, {"cause", to_string(last.cls)}};
        if (!skip.empty()) {
            payload["skipped"] = skip;
            log.emit(EventKind::Fallback, node_id, std::move(payload));
            continue;
        }
        log.emit(EventKind::Fallback, node_id, std::move(payload));
        result = attempt_tool(registry, fallback_id, inv, retry, log, node_id);
        if (result.payload) return ToolOutcome::ok(std::move(*result.payload), elapsed());
        last = *result.failure;
        previous = fallback_id;
    }
    auto fault = isolate_fault(last, inv);
    emit_fault(log, node_id, fault);
    return ToolOutcome::failed(std::move(fault), elapsed());
}

}  // namespace

ToolOutcome invoke_tool(const ToolRegistry& registry, const ToolInvocation& invocation, const RetryPolicy& retry,
                        EventSink* log, const std::string& node_id) {
    NullSink null_sink;
    EventSink& sink = log != nullptr ? *log : null_sink;
    try {
        return invoke_unchecked(registry, invocation, retry, sink, node_id);
    } catch (const std::exception& e) {
        return ToolOutcome::failed(isolate_fault({FailureClass::Permanent, e.what()}, invocation));
    } catch (...) {
        return ToolOutcome::failed(isolate_fault({FailureClass::Permanent, "unknown failure"}, invocation));
    }
}

// ---- builtin stubs -------------------------------------------------------

namespace {

std::string corpus_key(std::string_view query) {
    std::string out;
    bool space = false;
    for (char ch : trim(to_lower(query))) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += ch;
    }
    return out;
}

}  // namespace

SearchCorpus::SearchCorpus(json entries) {
    const json& list = entries.is_object() && entries.contains("entries") ? entries.at("entries") : entries;
    if (list.is_object()) {
        for (const auto& [query, results] : list.items()) entries_[corpus_key(query)] = results;
        return;
    }
    if (!list.is_array()) throw SchemaError("search corpus: expected an object or a list of entries");
    for (const auto& e : list) {
        if (!e.contains("query")) throw MissingFieldError("entries[].query");
        entries_[corpus_key(e.at("query").get<std::string>())] = e.value("results", json::array());
    }
}

SearchCorpus SearchCorpus::load(const std::filesystem::path& path) {
    return SearchCorpus(json::parse(parse_json_document(read_file(path)).dump()));
}

std::optional<json> SearchCorpus::lookup(std::string_view query) const {
    auto it = entries_.find(corpus_key(query));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

namespace {

class ArithmeticParser {
public:
    explicit ArithmeticParser(std::string_view text) : text_(text) {}

    double parse() {
        const double v = expression();
        skip();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ToolFailure(FailureClass::Permanent,
                          "arithmetic-eval: " + what + " at position " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool take(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    double expression() {
        double v = term();
        while (true) {
            if (take('+')) v += term();
            else if (take('-')) v -= term();
            else return v;
        }
    }
    double term() {
        double v = unary();
        while (true) {
            if (take('*')) {
                v *= unary();
            } else if (take('/')) {
                const double d = unary();
                if (d == 0) fail("division by zero");
                v /= d;
            } else {
                return v;
            }
        }
    }
    double unary() {
        if (take('-')) return -unary();
        if (take('+')) return unary();
        return power();
    }
    double power() {
        const double base = primary();
        if (take('^')) return std::pow(base, unary());
        return base;
    }
    double primary() {
        if (++depth_ > 200) fail("expression nested too deeply");
        double v = 0;
        if (take('(')) {
            v = expression();
            if (!take(')')) fail("missing ')'");
        } else {
            skip();
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
                ++pos_;
            }
            if (start == pos_) fail("expected a number");
            const std::string number(text_.substr(start, pos_ - start));
            if (std::count(number.begin(), number.end(), '.') > 1) fail("malformed number '" + number + "'");
            v = std::stod(number);
        }
        --depth_;
        return v;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

std::string search_impl(const std::shared_ptr<const SearchCorpus>& corpus, const json& args,
                        std::string_view source) {
    const auto query = args.at("query").get<std::string>();
    auto results = corpus->lookup(query);
    if (!results) return "No results found for '" + query + "'.";
    json r = *results;
    if (args.contains("num_results") && r.is_array()) {
        const auto n = std::max<std::int64_t>(0, args.at("num_results").get<std::int64_t>());
        if (static_cast<std::size_t>(n) < r.size()) r.erase(r.begin() + n, r.end());
    }
    return json{{"source", source}, {"query", query}, {"results", r}}.dump();
}

ToolContract search_contract(const std::string& name, std::vector<std::string> fallbacks) {
    return {"tool-searching",
            name,
            {{"query", FieldType::String, true, "Search query"},
             {"num_results", FieldType::Integer, false, "Maximum number of results"}},
            "Searches the canned document corpus and returns matching results as JSON.",
            std::move(fallbacks)};
}

}  // namespace

double evaluate_arithmetic(std::string_view expression) { return ArithmeticParser(expression).parse(); }

std::string format_number(double value) {
    if (std::isfinite(value) && std::floor(value) == value && std::fabs(value) < 1e15) {
        return std::to_string(static_cast<long long>(value));
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

ToolRegistry& register_builtin_stubs(ToolRegistry& registry, const BuiltinToolOptions& options) {
    auto corpus = options.corpus ? options.corpus : std::make_shared<SearchCorpus>();
    const std::filesystem::path sandbox = options.sandbox_dir;

    registry.add({"tool-basic",
                  "echo",
                  {{"text", FieldType::String, true, "Text to return"}},
                  "Returns its input text unchanged.",
                  {}},
                 [](const json& args) { return args.at("text").get<std::string>(); });

    registry.add(search_contract("scripted-search-primary", {"tool-searching/scripted-search-backup"}),
                 [corpus](const json& args) { return search_impl(corpus, args, "primary"); });
    registry.add(search_contract("scripted-search-backup", {}),
                 [corpus](const json& args) { return search_impl(corpus, args, "backup"); });

    registry.add({"tool-reader",
                  "file-read",
                  {{"path", FieldType::String, true, "Path inside the sandbox directory"}},
                  "Reads a text file from the local sandbox directory.",
                  {}},
                 [sandbox](const json& args) {
                     const auto requested = args.at("path").get<std::string>();
                     std::filesystem::path rel(requested);
                     if (rel.is_absolute()) rel = rel.relative_path();
                     const auto root = std::filesystem::weakly_canonical(sandbox);
                     const auto full = std::filesystem::weakly_canonical(root / rel);
                     const auto [r, f] = std::mismatch(root.begin(), root.end(), full.begin(), full.end());
                     if (r != root.end()) {
                         throw ToolFailure(FailureClass::Permanent,
                                           "access to '" + requested + "' outside the sandbox is forbidden");
                     }
                     if (!std::filesystem::is_regular_file(full)) {
                         throw ToolFailure(FailureClass::Permanent,
                                           "can't open file '" + requested + "': [Errno 2] No such file or directory");
                     }
                     return read_file(full);
                 });

    registry.add({"tool-code",
                  "arithmetic-eval",
                  {{"expression", FieldType::String, true, "Arithmetic expression using + - * / ^ ( )"}},
                  "Evaluates an arithmetic expression and returns the numeric result.",
                  {}},
                 [](const json& args) { return format_number(evaluate_arithmetic(args.at("expression").get<std::string>())); });
    return registry;
}

// ---- manifest and subprocess adapter ---------------------------------------

namespace {

ToolImpl canned_impl(const json& spec, const std::string& tool_id) {
    if (spec.contains("fail")) {
        const std::string message = spec.at("fail").get<std::string>();
        std::optional<int> status;
        if (spec.contains("status")) status = spec.at("status").get<int>();
        const auto cls = classify_failure(RawFailure{status, message});
        return [cls, message](const json&) -> std::string { throw ToolFailure(cls, message); };
    }
    if (spec.contains("payload")) {
        const std::string payload = spec.at("payload").get<std::string>();
        return [payload](const json&) { return payload; };
    }
    if (spec.contains("key")) {
        const std::string key = spec.at("key").get<std::string>();
        std::map<std::string, std::string> responses;
        const json table = spec.value("responses", json::object());
        for (const auto& [k, v] : table.items()) {
            responses[corpus_key(k)] = v.get<std::string>();
        }
        const std::string fallback = spec.value("default", "No result.");
        return [key, responses, fallback](const json& args) {
            if (!args.contains(key)) return fallback;
            const auto& v = args.at(key);
            auto it = responses.find(corpus_key(v.is_string() ? v.get<std::string>() : v.dump()));
            return it == responses.end() ? fallback : it->second;
        };
    }
    throw SchemaError("tool '" + tool_id + "': canned impl needs payload, key or fail");
}

}  // namespace

void load_tool_manifest(const std::filesystem::path& path, ToolRegistry& registry, const BuiltinToolOptions& options) {
    const json doc = json::parse(parse_json_document(read_file(path)).dump());
    if (!doc.is_object()) throw SchemaError(path.string() + ": expected a JSON object");
    static const std::set<std::string> allowed = {"builtins", "timeout_ms", "tools"};
    for (const auto& [key, _] : doc.items()) {
        if (!allowed.count(key)) throw SchemaError(path.string() + ": unknown field '" + key + "'");
    }
    if (doc.value("builtins", false)) register_builtin_stubs(registry, options);
    if (doc.contains("timeout_ms")) registry.timeout = std::chrono::milliseconds(doc.at("timeout_ms").get<int>());
    for (const auto& entry : doc.value("tools", json::array())) {
        auto contract = tool_contract_from_json(entry);
        const std::string id = contract.tool_id();
        if (!entry.contains("impl")) throw MissingFieldError("tools[" + id + "].impl");
        const auto& impl = entry.at("impl");
        const std::string kind = impl.value("kind", "");
        if (kind == "canned") {
            registry.add(std::move(contract), canned_impl(impl, id));
        } else if (kind == "subprocess") {
            auto argv = impl.at("command").get<std::vector<std::string>>();
            if (argv.empty()) throw SchemaError("tool '" + id + "': empty command");
            if (argv[0].find('/') != std::string::npos && std::filesystem::path(argv[0]).is_relative()) {
                argv[0] = (path.parent_path() / argv[0]).lexically_normal().string();
            }
            for (std::size_t i = 1; i < argv.size(); ++i) {
                const auto candidate = path.parent_path() / argv[i];
                if (std::filesystem::path(argv[i]).is_relative() && std::filesystem::exists(candidate)) {
                    argv[i] = candidate.lexically_normal().string();
                }
            }
            registry.add(std::move(contract), subprocess_tool(std::move(argv), id), impl.value("concurrent_safe", true));
        } else {
            throw SchemaError("tool '" + id + "': unknown impl kind '" + kind + "'");
        }
    }
}

ToolImpl subprocess_tool(std::vector<std::string> argv, std::string tool_id) {
    // A child that exits before reading its request must not kill the runtime.
    static const bool sigpipe_ignored = (std::signal(SIGPIPE, SIG_IGN), true);
    (void)sigpipe_ignored;
    return [argv = std::move(argv), tool_id = std::move(tool_id)](const json& arguments) -> std::string {
        int to_child[2];
        int from_child[2];
        if (pipe(to_child) != 0) throw ToolFailure(FailureClass::TransientNetwork, "pipe failed");
        if (pipe(from_child) != 0) {
            close(to_child[0]);
            close(to_child[1]);
            throw ToolFailure(FailureClass::TransientNetwork, "pipe failed");
        }
        posix_spawn_file_actions_t actions;
        posix_spawn_file_actions_init(&actions);
        posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
        posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
        posix_spawn_file_actions_addclose(&actions, to_child[1]);
        posix_spawn_file_actions_addclose(&actions, from_child[0]);

        std::vector<char*> cargv;
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        pid_t pid = 0;
        const int rc = posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
        posix_spawn_file_actions_destroy(&actions);
        close(to_child[0]);
        close(from_child[1]);
        if (rc != 0) {
            close(to_child[1]);
            close(from_child[0]);
            throw ToolFailure(FailureClass::Permanent,
                              "cannot start '" + argv[0] + "': " + std::string(std::strerror(rc)));
        }

        const std::string request = json{{"tool", tool_id}, {"arguments", arguments}}.dump() + "\n";
        std::size_t written = 0;
        while (written < request.size()) {
            const auto n = write(to_child[1], request.data() + written, request.size() - written);
            if (n <= 0) break;
            written += static_cast<std::size_t>(n);
        }
        close(to_child[1]);

        std::string output;
        char buf[4096];
        while (true) {
            const auto n = read(from_child[0], buf, sizeof buf);
            if (n <= 0) break;
            output.append(buf, static_cast<std::size_t>(n));
        }
        close(from_child[0]);
        int status = 0;
        waitpid(pid, &status, 0);

        const auto newline = output.find('\n');
        const std::string line = trim(output.substr(0, newline));
        if (line.empty()) {
            throw ToolFailure(FailureClass::MalformedResponse,
                              "subprocess tool " + tool_id + " produced no response (exit status " +
                                  std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) + ")");
        }
        json reply;
        try {
            reply = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ToolFailure(FailureClass::MalformedResponse,
                              "subprocess tool " + tool_id + " returned unparseable output: " + e.what());
        }
        if (reply.value("ok", false)) {
            const auto& payload = reply.contains("payload") ? reply.at("payload") : json("");
            return payload.is_string() ? payload.get<std::string>() : payload.dump();
        }
        const std::string error = reply.value("error", "subprocess tool reported a failure");
        std::optional<int> code;
        if (reply.contains("status") && reply.at("status").is_number_integer()) code = reply.at("status").get<int>();
        throw ToolFailure(classify_failure(RawFailure{code, error}), error);
    };
}

}  // namespace agentflow
