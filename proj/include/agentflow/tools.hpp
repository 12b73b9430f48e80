#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentflow/events.hpp"
#include "agentflow/retry.hpp"
#include "agentflow/tool_call.hpp"
#include "agentflow/tool_types.hpp"

namespace agentflow {

enum class FieldType { String, Integer, Number, Boolean, List, Object };

std::string_view to_string(FieldType t);
std::optional<FieldType> field_type_from_string(std::string_view s);

struct FieldDescriptor {
    std::string name;
    FieldType type = FieldType::String;
    bool required = true;
    std::string description;

    bool operator==(const FieldDescriptor&) const = default;
};

struct ToolContract {
    std::string server_name;
    std::string tool_name;
    std::vector<FieldDescriptor> input_schema;
    std::string description;
    std::vector<std::string> fallbacks;  // tool ids, tried in order

    std::string tool_id() const { return server_name + "/" + tool_name; }
    std::vector<std::string> required_fields() const;
    bool operator==(const ToolContract&) const = default;
};

json to_json(const ToolContract& c);
ToolContract tool_contract_from_json(const json& j);

// JSONSchema-style rendering used in the system prompt listing.
json contract_json_schema(const ToolContract& c);

// A tool body. Returns the payload text; signals failure by throwing
// (ToolFailure for classified failures, anything else is classified from
// its message).
using ToolImpl = std::function<std::string(const json& arguments)>;

class DuplicateToolError : public Error {
public:
    explicit DuplicateToolError(const std::string& id) : Error("tool '" + id + "' is already registered") {}
};

class ToolRegistry {
public:
    void add(ToolContract contract, ToolImpl impl, bool concurrent_safe = true);  // DuplicateToolError
    // Swaps the implementation of a registered tool (fault injection).
    void replace_impl(std::string_view tool_id, ToolImpl impl);

    const ToolContract* find(std::string_view tool_id) const;
    const ToolContract* find(std::string_view server, std::string_view tool) const;
    bool contains(std::string_view tool_id) const { return find(tool_id) != nullptr; }
    const ToolImpl& impl(std::string_view tool_id) const;
    bool concurrent_safe(std::string_view tool_id) const;
    std::vector<std::string> ids() const;  // registration order
    std::size_t size() const { return order_.size(); }

    std::chrono::milliseconds timeout{30000};

private:
    struct Binding {
        ToolContract contract;
        ToolImpl impl;
        bool concurrent_safe = true;
    };
    std::vector<std::string> order_;
    std::map<std::string, Binding, std::less<>> bindings_;
};

// nullopt when every required field is present, every field conforms to its
// declared type and no undeclared field is given; otherwise an
// invalid-arguments artifact naming each offending field.
std::optional<FaultArtifact> validate_arguments(const ToolContract& contract,
                                                const ToolInvocation& invocation);

// Deterministic translation of a raw failure into a typed artifact.
FaultArtifact isolate_fault(const FailureInfo& failure, const ToolInvocation& invocation);

// "[type] body Remedy: ...", capped at kMaxFaultSummaryChars.
std::string fault_summary(FaultType type, std::string_view body);

// Artifacts for failures that never reach a tool body.
FaultArtifact malformed_call_artifact(const MalformedCall& error, std::string_view raw_text);
FaultArtifact multiple_calls_artifact(const MultipleCalls& error, std::string_view raw_text);
FaultArtifact malformed_turn_artifact(std::string_view raw_text);
FaultArtifact unavailable_artifact(const ToolInvocation& invocation, std::string_view reason);
FaultArtifact budget_exceeded_artifact(std::string_view budget_kind, double limit,
                                       const FaultContext& context, std::string_view detail = {});
FaultArtifact backend_fault_artifact(FaultType type, const FailureInfo& failure,
                                     std::string_view node_id);

std::string arguments_digest(const json& arguments);

// Text handed back to the model for a completed tool call.
std::string render_observation(const ToolInvocation& invocation, const ToolOutcome& outcome);
std::string render_fault(const FaultArtifact& fault);

// Runs the validated call in isolation with the registry timeout, retries
// classified failures per policy, then walks the contract's fallbacks in
// declaration order. Never throws: every failure becomes a fault outcome.
// Emits tool-attempt, retry, fallback and fault events.
ToolOutcome invoke_tool(const ToolRegistry& registry, const ToolInvocation& invocation,
                        const RetryPolicy& retry, EventSink* log = nullptr,
                        const std::string& node_id = {});

// ---- builtin stubs --------------------------------------------------------

// Canned search results keyed by normalized query text.
class SearchCorpus {
public:
    SearchCorpus() = default;
    explicit SearchCorpus(json entries);
    static SearchCorpus load(const std::filesystem::path& path);

    // Results for the query (case and surrounding whitespace ignored).
    std::optional<json> lookup(std::string_view query) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, json> entries_;
};

struct BuiltinToolOptions {
    std::shared_ptr<const SearchCorpus> corpus = std::make_shared<SearchCorpus>();
    std::filesystem::path sandbox_dir = ".";
};

// Registers tool-basic/echo, tool-searching/scripted-search-primary
// (fallback: tool-searching/scripted-search-backup),
// tool-searching/scripted-search-backup, tool-reader/file-read and
// tool-code/arithmetic-eval. Throws DuplicateToolError on re-registration.
ToolRegistry& register_builtin_stubs(ToolRegistry& registry, const BuiltinToolOptions& options = {});

// Evaluates + - * / ^ and parentheses over decimal numbers.
double evaluate_arithmetic(std::string_view expression);
std::string format_number(double value);

// Loads contracts and bindings from a JSON manifest:
//   {"builtins": bool, "timeout_ms": int,
//    "tools": [{server_name, tool_name, description, input_schema, fallbacks,
//               impl: {kind: "canned", payload | key+responses+default | fail}
//                   | {kind: "subprocess", command: [argv...]}}]}
// Relative subprocess paths resolve against the manifest directory.
void load_tool_manifest(const std::filesystem::path& path, ToolRegistry& registry,
                        const BuiltinToolOptions& options = {});

// Out-of-process adapter: one child process per invocation; writes one JSON
// line {"tool", "arguments"} and reads one JSON line back, either
// {"ok": true, "payload": text} or {"ok": false, "error": text, "status"?: int}.
ToolImpl subprocess_tool(std::vector<std::string> argv, std::string tool_id);

}  // namespace agentflow
