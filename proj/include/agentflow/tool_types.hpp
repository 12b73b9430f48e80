#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

#include "agentflow/util.hpp"

namespace agentflow {

enum class FaultType {
    InvalidArguments,
    MalformedCall,
    ToolUnavailable,
    TransientFailure,
    PermanentFailure,
    BudgetExceeded,
};

std::string_view to_string(FaultType t);
FaultType fault_type_from_string(std::string_view s);

// Remedy category stated in every summary of the given type.
std::string_view remedy_for(FaultType t);

struct FaultContext {
    std::string tool;              // "server/tool", "agent-<id>", or empty
    std::string arguments_digest;  // sha256 of the canonical argument JSON

    bool operator==(const FaultContext&) const = default;
};

// Typed, summarized failure that is safe to hand back to a model.
struct FaultArtifact {
    FaultType fault_type = FaultType::PermanentFailure;
    std::string summary;
    FaultContext context;

    bool operator==(const FaultArtifact&) const = default;
};

inline constexpr std::size_t kMaxFaultSummaryChars = 2000;

struct ToolInvocation {
    std::string server_name;
    std::string tool_name;
    json arguments = json::object();
    std::string raw_text;

    std::string tool_id() const { return server_name + "/" + tool_name; }

    // Equality over the parsed call; raw_text is provenance only.
    bool same_call(const ToolInvocation& other) const {
        return server_name == other.server_name && tool_name == other.tool_name &&
               arguments == other.arguments;
    }
    bool operator==(const ToolInvocation&) const = default;
};

enum class ToolStatus { Ok, Fault };

struct ToolOutcome {
    ToolStatus status = ToolStatus::Ok;
    std::string payload;                 // set when ok
    std::optional<FaultArtifact> fault;  // set when fault
    std::chrono::milliseconds duration{0};

    static ToolOutcome ok(std::string payload, std::chrono::milliseconds d = {}) {
        return {ToolStatus::Ok, std::move(payload), std::nullopt, d};
    }
    static ToolOutcome failed(FaultArtifact fault, std::chrono::milliseconds d = {}) {
        return {ToolStatus::Fault, {}, std::move(fault), d};
    }

    bool is_ok() const { return status == ToolStatus::Ok; }
    bool operator==(const ToolOutcome&) const = default;
};

json to_json(const FaultArtifact& f);
FaultArtifact fault_artifact_from_json(const json& j);
json to_json(const ToolInvocation& inv);
ToolInvocation tool_invocation_from_json(const json& j);
// `with_timing` controls whether duration is written; timing is kept outside
// digested event payloads.
json to_json(const ToolOutcome& o, bool with_timing = true);
ToolOutcome tool_outcome_from_json(const json& j);

}  // namespace agentflow
