#include "agentflow/message.hpp"

#include "agentflow/errors.hpp"

namespace agentflow {

std::string_view to_string(FaultType t) {
    switch (t) {
        case FaultType::InvalidArguments: return "invalid-arguments";
        case FaultType::MalformedCall: return "malformed-call";
        case FaultType::ToolUnavailable: return "tool-unavailable";
        case FaultType::TransientFailure: return "transient-failure";
        case FaultType::PermanentFailure: return "permanent-failure";
        case FaultType::BudgetExceeded: return "budget-exceeded";
    }
    return "permanent-failure";
}

FaultType fault_type_from_string(std::string_view s) {
    for (auto t : {FaultType::InvalidArguments, FaultType::MalformedCall, FaultType::ToolUnavailable,
                   FaultType::TransientFailure, FaultType::PermanentFailure,
                   FaultType::BudgetExceeded}) {
        if (to_string(t) == s) return t;
    }
    throw SchemaError("unknown fault type '" + std::string(s) + "'");
}

std::string_view remedy_for(FaultType t) {
    switch (t) {
        case FaultType::InvalidArguments:
        case FaultType::MalformedCall: return "fix the call format";
        case FaultType::TransientFailure: return "retry later";
        case FaultType::ToolUnavailable:
        case FaultType::PermanentFailure: return "use an alternative source";
        case FaultType::BudgetExceeded: return "finish with the information already gathered";
    }
    return "use an alternative source";
}

std::string_view to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    if (s == "tool") return Role::Tool;
    throw SchemaError("unknown role '" + std::string(s) + "'");
}

std::string_view to_string(AnswerFormat f) {
    switch (f) {
        case AnswerFormat::Text: return "text";
        case AnswerFormat::Integer: return "integer";
        case AnswerFormat::Number: return "number";
        case AnswerFormat::List: return "list";
        case AnswerFormat::UnorderedList: return "unordered-list";
    }
    return "text";
}

std::optional<AnswerFormat> answer_format_from_string(std::string_view s) {
    for (auto f : {AnswerFormat::Text, AnswerFormat::Integer, AnswerFormat::Number,
                   AnswerFormat::List, AnswerFormat::UnorderedList}) {
        if (to_string(f) == s) return f;
    }
    if (s == "comma-list") return AnswerFormat::List;
    return std::nullopt;
}

std::string_view to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::Unit: return "unit";
        case ConstraintKind::Range: return "range";
        case ConstraintKind::Format: return "format";
        case ConstraintKind::Spelling: return "spelling";
        case ConstraintKind::Other: return "other";
    }
    return "other";
}

ConstraintKind constraint_kind_from_string(std::string_view s) {
    for (auto k : {ConstraintKind::Unit, ConstraintKind::Range, ConstraintKind::Format,
                   ConstraintKind::Spelling, ConstraintKind::Other}) {
        if (to_string(k) == s) return k;
    }
    return ConstraintKind::Other;
}

std::string_view to_string(TurnKind k) {
    switch (k) {
        case TurnKind::ToolCall: return "tool-call";
        case TurnKind::Delegate: return "delegate";
        case TurnKind::Final: return "final";
        case TurnKind::Malformed: return "malformed";
    }
    return "malformed";
}

TurnKind turn_kind_from_string(std::string_view s) {
    for (auto k : {TurnKind::ToolCall, TurnKind::Delegate, TurnKind::Final, TurnKind::Malformed}) {
        if (to_string(k) == s) return k;
    }
    throw SchemaError("unknown turn kind '" + std::string(s) + "'");
}

std::string render_task(const NormalizedTask& task) {
    std::string out = task.clarified_goal;
    if (!task.restored_constraints.empty()) {
        out += "\n\nConstraints:";
        for (const auto& c : task.restored_constraints) {
            out += "\n- [" + std::string(to_string(c.kind)) + "] " + c.text;
        }
    }
    if (!task.ambiguity_flags.empty()) {
        out += "\n\nPotential ambiguities:";
        for (const auto& a : task.ambiguity_flags) out += "\n- " + a;
    }
    if (!task.hints.empty()) {
        out += "\n\nHints:";
        for (const auto& h : task.hints) out += "\n- " + h;
    }
    if (task.format_tag && *task.format_tag != AnswerFormat::Text) {
        out += "\n\nExpected answer format: " + std::string(to_string(*task.format_tag));
    }
    return out;
}

// ---- JSON ----------------------------------------------------------------

json to_json(const FaultArtifact& f) {
    return {{"fault_type", to_string(f.fault_type)},
            {"summary", f.summary},
            {"context", {{"tool", f.context.tool}, {"arguments_digest", f.context.arguments_digest}}}};
}

FaultArtifact fault_artifact_from_json(const json& j) {
    FaultArtifact f;
    f.fault_type = fault_type_from_string(j.at("fault_type").get<std::string>());
    f.summary = j.at("summary").get<std::string>();
    if (j.contains("context")) {
        f.context.tool = j.at("context").value("tool", "");
        f.context.arguments_digest = j.at("context").value("arguments_digest", "");
    }
    return f;
}

json to_json(const ToolInvocation& inv) {
    return {{"server_name", inv.server_name},
            {"tool_name", inv.tool_name},
            {"arguments", inv.arguments},
            {"raw_text", inv.raw_text}};
}

ToolInvocation tool_invocation_from_json(const json& j) {
    ToolInvocation inv;
    inv.server_name = j.at("server_name").get<std::string>();
    inv.tool_name = j.at("tool_name").get<std::string>();
    inv.arguments = j.value("arguments", json::object());
    inv.raw_text = j.value("raw_text", "");
    return inv;
}

json to_json(const ToolOutcome& o, bool with_timing) {
    json j{{"status", o.is_ok() ? "ok" : "fault"}};
    if (o.is_ok()) j["payload"] = o.payload;
    if (o.fault) j["fault"] = to_json(*o.fault);
    if (with_timing) j["duration_ms"] = o.duration.count();
    return j;
}

ToolOutcome tool_outcome_from_json(const json& j) {
    ToolOutcome o;
    o.status = j.at("status").get<std::string>() == "ok" ? ToolStatus::Ok : ToolStatus::Fault;
    o.payload = j.value("payload", "");
    if (j.contains("fault")) o.fault = fault_artifact_from_json(j.at("fault"));
    o.duration = std::chrono::milliseconds(j.value("duration_ms", 0));
    return o;
}

json to_json(const Message& m) {
    json j{{"role", to_string(m.role)},
           {"content", m.content},
           {"turn_index", m.turn_index},
           {"node_id", m.node_id}};
    if (!m.attachments.empty()) j["attachments"] = m.attachments;
    return j;
}

Message message_from_json(const json& j) {
    Message m;
    m.role = role_from_string(j.at("role").get<std::string>());
    m.content = j.at("content").get<std::string>();
    m.turn_index = j.value("turn_index", 0);
    m.node_id = j.value("node_id", "");
    if (j.contains("attachments")) m.attachments = j.at("attachments").get<std::vector<std::string>>();
    return m;
}

json to_json(const NormalizedTask& t) {
    json constraints = json::array();
    for (const auto& c : t.restored_constraints) {
        constraints.push_back({{"text", c.text}, {"kind", to_string(c.kind)}});
    }
    json j{{"original_query", t.original_query},
           {"clarified_goal", t.clarified_goal},
           {"restored_constraints", constraints},
           {"ambiguity_flags", t.ambiguity_flags},
           {"hints", t.hints}};
    j["format"] = t.format_tag ? json(to_string(*t.format_tag)) : json(nullptr);
    return j;
}

NormalizedTask normalized_task_from_json(const json& j) {
    NormalizedTask t;
    t.original_query = j.at("original_query").get<std::string>();
    t.clarified_goal = j.at("clarified_goal").get<std::string>();
    for (const auto& c : j.value("restored_constraints", json::array())) {
        t.restored_constraints.push_back(
            {c.at("text").get<std::string>(),
             constraint_kind_from_string(c.value("kind", "other"))});
    }
    t.ambiguity_flags = j.value("ambiguity_flags", std::vector<std::string>{});
    t.hints = j.value("hints", std::vector<std::string>{});
    if (j.contains("format") && j.at("format").is_string()) {
        t.format_tag = answer_format_from_string(j.at("format").get<std::string>());
    }
    return t;
}

json to_json(const StructuredAnswer& a) {
    json evidence = json::array();
    for (const auto& e : a.evidence) evidence.push_back({{"claim", e.claim}, {"source", e.source}});
    json j{{"final_answer", a.final_answer}, {"evidence", evidence}, {"warnings", a.warnings}};
    j["format"] = a.format_tag ? json(to_string(*a.format_tag)) : json(nullptr);
    return j;
}

StructuredAnswer structured_answer_from_json(const json& j) {
    StructuredAnswer a;
    a.final_answer = j.at("final_answer").get<std::string>();
    for (const auto& e : j.value("evidence", json::array())) {
        a.evidence.push_back({e.at("claim").get<std::string>(), e.at("source").get<std::string>()});
    }
    a.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("format") && j.at("format").is_string()) {
        a.format_tag = answer_format_from_string(j.at("format").get<std::string>());
    }
    return a;
}

json to_json(const TurnRecord& r, bool with_timing) {
    json request = json::array();
    for (const auto& m : r.request) request.push_back(to_json(m));
    json j{{"node_id", r.node_id},
           {"turn_index", r.turn_index},
           {"request", request},
           {"response", to_json(r.response)},
           {"kind", to_string(r.kind)},
           {"final_text", r.final_text},
           {"delegate_to", r.delegate_to},
           {"observation", r.observation},
           {"completed", r.completed}};
    j["tool_invocation"] = r.tool_invocation ? to_json(*r.tool_invocation) : json(nullptr);
    j["tool_outcome"] = r.tool_outcome ? to_json(*r.tool_outcome, with_timing) : json(nullptr);
    j["fault"] = r.fault ? to_json(*r.fault) : json(nullptr);
    if (with_timing) j["wall_time_ms"] = r.wall_time.count();
    return j;
}

TurnRecord turn_record_from_json(const json& j) {
    TurnRecord r;
    r.node_id = j.at("node_id").get<std::string>();
    r.turn_index = j.at("turn_index").get<int>();
    for (const auto& m : j.at("request")) r.request.push_back(message_from_json(m));
    r.response = message_from_json(j.at("response"));
    r.kind = turn_kind_from_string(j.at("kind").get<std::string>());
    r.final_text = j.value("final_text", "");
    r.delegate_to = j.value("delegate_to", "");
    r.observation = j.value("observation", "");
    r.completed = j.value("completed", false);
    if (j.contains("tool_invocation") && !j.at("tool_invocation").is_null()) {
        r.tool_invocation = tool_invocation_from_json(j.at("tool_invocation"));
    }
    if (j.contains("tool_outcome") && !j.at("tool_outcome").is_null()) {
        r.tool_outcome = tool_outcome_from_json(j.at("tool_outcome"));
    }
    if (j.contains("fault") && !j.at("fault").is_null()) {
        r.fault = fault_artifact_from_json(j.at("fault"));
    }
    r.wall_time = std::chrono::milliseconds(j.value("wall_time_ms", 0));
    return r;
}

json turn_timing(const TurnRecord& r) {
    json t{{"wall_time_ms", r.wall_time.count()}};
    if (r.tool_outcome) t["tool_duration_ms"] = r.tool_outcome->duration.count();
    return t;
}

void apply_turn_timing(TurnRecord& r, const json& timing) {
    if (!timing.is_object()) return;
    r.wall_time = std::chrono::milliseconds(timing.value("wall_time_ms", 0));
    if (r.tool_outcome && timing.contains("tool_duration_ms")) {
        r.tool_outcome->duration = std::chrono::milliseconds(timing.at("tool_duration_ms").get<long long>());
    }
}

}  // namespace agentflow
