#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentflow/tool_types.hpp"
#include "agentflow/util.hpp"

namespace agentflow {

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct Message {
    Role role = Role::User;
    std::string content;
    int turn_index = 0;
    std::string node_id;
    std::vector<std::string> attachments;

    bool operator==(const Message&) const = default;
};

// Expected shape of a final answer; drives canonicalization and output
// formatting.
enum class AnswerFormat {
    Text,
    Integer,
    Number,
    List,           // comma separated, order significant
    UnorderedList,  // comma separated, order free
};

std::string_view to_string(AnswerFormat f);
std::optional<AnswerFormat> answer_format_from_string(std::string_view s);

enum class ConstraintKind { Unit, Range, Format, Spelling, Other };

std::string_view to_string(ConstraintKind k);
ConstraintKind constraint_kind_from_string(std::string_view s);

struct RestoredConstraint {
    std::string text;
    ConstraintKind kind = ConstraintKind::Other;

    bool operator==(const RestoredConstraint&) const = default;
};

struct NormalizedTask {
    std::string original_query;
    std::string clarified_goal;
    std::vector<RestoredConstraint> restored_constraints;
    std::vector<std::string> ambiguity_flags;
    std::vector<std::string> hints;
    std::optional<AnswerFormat> format_tag;

    bool operator==(const NormalizedTask&) const = default;
};

// Task text handed to the entry agent: the clarified goal followed by the
// restored constraints, ambiguities and hints.
std::string render_task(const NormalizedTask& task);

struct Evidence {
    std::string claim;
    std::string source;  // "turn:<index>" or free-form reference

    bool operator==(const Evidence&) const = default;
};

struct StructuredAnswer {
    std::string final_answer;
    std::vector<Evidence> evidence;
    std::vector<std::string> warnings;
    std::optional<AnswerFormat> format_tag;

    bool operator==(const StructuredAnswer&) const = default;
};

enum class TurnKind { ToolCall, Delegate, Final, Malformed };

std::string_view to_string(TurnKind k);
TurnKind turn_kind_from_string(std::string_view s);

// One backend call of one node plus its classified outcome.
struct TurnRecord {
    std::string node_id;
    int turn_index = 0;  // 0-based position in the node's transcript
    std::vector<Message> request;
    Message response;
    TurnKind kind = TurnKind::Malformed;
    std::optional<ToolInvocation> tool_invocation;
    std::optional<ToolOutcome> tool_outcome;
    std::optional<FaultArtifact> fault;  // malformed turns
    std::string final_text;              // final turns
    std::string delegate_to;             // delegation turns
    // Text fed back to the model as the next user message; empty for finals.
    std::string observation;
    bool completed = false;
    std::chrono::milliseconds wall_time{0};

    bool operator==(const TurnRecord&) const = default;
};

json to_json(const Message& m);
Message message_from_json(const json& j);
json to_json(const NormalizedTask& t);
NormalizedTask normalized_task_from_json(const json& j);
json to_json(const StructuredAnswer& a);
StructuredAnswer structured_answer_from_json(const json& j);
json to_json(const TurnRecord& r, bool with_timing = true);
TurnRecord turn_record_from_json(const json& j);

// Timing fields (turn wall time, tool duration) split out so digested
// payloads remain stable across runs.
json turn_timing(const TurnRecord& r);
void apply_turn_timing(TurnRecord& r, const json& timing);

}  // namespace agentflow
