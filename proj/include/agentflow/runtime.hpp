#pragma once

#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "agentflow/backend.hpp"
#include "agentflow/budget.hpp"
#include "agentflow/graph_spec.hpp"
#include "agentflow/message.hpp"
#include "agentflow/prompts.hpp"
#include "agentflow/tools.hpp"

namespace agentflow {

enum class AgentStatus { Running, Finished, TurnLimit, BudgetStop };

std::string_view to_string(AgentStatus s);
AgentStatus agent_status_from_string(std::string_view s);

struct DelegationRequest {
    NodeId parent;
    NodeId child;
    std::string subtask;
    int depth = 0;  // depth of the child; the entry node runs at depth 0

    bool operator==(const DelegationRequest&) const = default;
};

// A delegation turn whose child is still running.
struct PendingDelegation {
    TurnRecord record;
    DelegationRequest request;

    bool operator==(const PendingDelegation&) const = default;
};

struct AgentState {
    AgentNodeSpec node;
    std::string task;  // first user message
    int depth = 0;
    std::vector<TurnRecord> transcript;
    int turns_used = 0;
    AgentStatus status = AgentStatus::Running;
    std::string final_text;
    std::optional<PendingDelegation> pending;

    bool operator==(const AgentState&) const = default;
};

AgentState fresh_state(const AgentNodeSpec& node, std::string task, int depth = 0);

// Node specs are stored by id and looked up in the graph on restore.
// Timing fields are excluded so equal states serialize identically.
json to_json(const AgentState& s);
AgentState agent_state_from_json(const json& j, const AgentGraphSpec& graph);

struct TurnOutcome {
    TurnKind kind = TurnKind::Malformed;
    std::optional<ToolInvocation> call;           // ToolCall
    std::optional<DelegationRequest> delegation;  // Delegate
    std::string final_text;                       // Final
    std::optional<FaultArtifact> fault;           // Malformed
};

inline constexpr std::string_view kHeavySentinel = "<needs_heavy/>";
inline constexpr std::string_view kFinalSentinel = "FINAL:";

// Classifies one assistant message for `node`: a tool call, a delegation
// (server_name "agent-<child>", tool_name "delegate", arguments {subtask}),
// a final answer (balanced \boxed{} or "FINAL:" with no tool block), or a
// malformed turn carrying the artifact to feed back.
TurnOutcome classify_response(std::string_view text, const AgentNodeSpec& node, int depth);

// Completed turns of every node, in completion order.
class RecordJournal {
public:
    void append(const TurnRecord& r);
    void append_all(const std::vector<TurnRecord>& rs);
    std::vector<TurnRecord> entries() const;

private:
    mutable std::mutex mutex_;
    std::vector<TurnRecord> records_;
};

struct RuntimeEnv {
    const AgentGraphSpec* graph = nullptr;
    BackendPool* backends = nullptr;
    const ToolRegistry* tools = nullptr;
    const PromptLibrary* prompts = nullptr;
    EventSink* log = nullptr;
    BudgetLedger* budget = nullptr;
    RecordJournal* journal = nullptr;

    RetryPolicy backend_retry;
    RetryPolicy tool_retry;
    std::mt19937_64* rng = nullptr;  // retry jitter in live mode
    int delegation_depth_limit = 3;
    int ensemble_parallelism = 4;
    bool deterministic = true;
    std::string formatted_date = "2025-01-01";
    std::optional<AnswerFormat> answer_format;  // canonicalization of heavy-mode candidates

    // Called after every completed turn of any node with the state that
    // completed it. Unset inside heavy-mode members.
    std::function<void(const AgentState&)> on_turn_complete;
    // Chain of live agents, entry first; maintained by run_agent.
    std::vector<AgentState*>* frontier = nullptr;
    // Restored child states continued in place of fresh children on resume.
    std::deque<AgentState>* resume_chain = nullptr;
};

// True iff another turn may start.
bool enforce_turn_limit(const AgentState& state);

std::string render_system_prompt(const AgentNodeSpec& node, const RuntimeEnv& env);
ChatRequest build_request(const AgentState& state, const RuntimeEnv& env);

// One turn: request, backend call under retry, classification, execution of
// the tool call or delegation, and the appended TurnRecord. Backend failures
// after retries become malformed turns.
TurnOutcome step_turn(AgentState& state, RuntimeEnv& env);

// Runs turns until a final answer, the node's turn limit or a budget stop,
// and returns the final text (best-effort last assistant text otherwise).
std::string run_agent(AgentState& state, RuntimeEnv& env);

struct DelegationResult {
    std::string text;
    std::optional<FaultArtifact> fault;
    AgentStatus child_status = AgentStatus::Finished;
};

// Runs the child with a fresh context and returns its result as an
// observation for the parent. Depth and spawn budget violations return a
// budget-exceeded artifact.
DelegationResult delegate_subtask(const DelegationRequest& request, RuntimeEnv& env);

// Best-effort answer text of an agent that stopped without a final answer.
std::string last_assistant_text(const AgentState& state);

}  // namespace agentflow
