#include "agentflow/runtime.hpp"

#include <algorithm>
#include <chrono>

#include "agentflow/answer.hpp"
#include "agentflow/heavy.hpp"
#include "agentflow/processors.hpp"

namespace agentflow {

namespace {

constexpr std::string_view kAgentServerPrefix = "agent-";
constexpr std::string_view kDelegateTool = "delegate";

std::chrono::milliseconds since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
}

TurnOutcome malformed(FaultArtifact fault) {
    TurnOutcome o;
    o.kind = TurnKind::Malformed;
    o.fault = std::move(fault);
    return o;
}

std::optional<std::string> sentinel_final(std::string_view text) {
    const auto pos = text.rfind(kFinalSentinel);
    if (pos == std::string_view::npos) return std::nullopt;
    auto rest = trim(text.substr(pos + kFinalSentinel.size()));
    if (rest.empty()) return std::nullopt;
    return rest;
}

// Keeps env.frontier in step with the live agent chain.
class FrontierGuard {
public:
    FrontierGuard(RuntimeEnv& env, AgentState& state) : frontier_(env.frontier) {
        if (frontier_ != nullptr) frontier_->push_back(&state);
    }
    ~FrontierGuard() {
        if (frontier_ != nullptr && !frontier_->empty()) frontier_->pop_back();
    }
    FrontierGuard(const FrontierGuard&) = delete;
    FrontierGuard& operator=(const FrontierGuard&) = delete;

private:
    std::vector<AgentState*>* frontier_;
};

EventSink& sink_of(RuntimeEnv& env) {
    static NullSink null_sink;
    return env.log != nullptr ? *env.log : null_sink;
}

void complete_turn(AgentState& state, RuntimeEnv& env, TurnRecord record) {
    record.completed = true;
    sink_of(env).emit(EventKind::Turn, state.node.id,
                      {{"phase", "record"}, {"record", to_json(record, false)}},
                      turn_timing(record));
    if (env.journal != nullptr) env.journal->append(record);
    state.transcript.push_back(std::move(record));
    state.turns_used = static_cast<int>(state.transcript.size());
    if (env.on_turn_complete) env.on_turn_complete(state);
}

std::string delegation_observation(const DelegationRequest& req, const DelegationResult& result) {
    if (result.fault) return render_fault(*result.fault);
    std::string note;
    if (result.child_status == AgentStatus::TurnLimit) {
        note = " (stopped at its turn limit without a final answer; this is its last output)";
    } else if (result.child_status == AgentStatus::BudgetStop) {
        note = " (stopped by the run budget; this is its last output)";
    }
    return "Result from agent-" + req.child + note + ":\n" + result.text;
}

// Runs the pending delegation of `state` (fresh or resumed) and completes
// the turn.
void finish_delegation(AgentState& state, RuntimeEnv& env, std::chrono::steady_clock::time_point started) {
    auto pending = *state.pending;
    const auto result = delegate_subtask(pending.request, env);
    pending.record.observation = delegation_observation(pending.request, result);
    pending.record.fault = result.fault;
    pending.record.wall_time += since(started);
    state.pending.reset();
    complete_turn(state, env, std::move(pending.record));
}

std::string heavy_observation(const HeavyOutcome& outcome) {
    return outcome.fault ? render_fault(*outcome.fault) : outcome.summary;
}

}  // namespace

std::string_view to_string(AgentStatus s) {
    switch (s) {
        case AgentStatus::Running: return "running";
        case AgentStatus::Finished: return "finished";
        case AgentStatus::TurnLimit: return "turn-limit";
        case AgentStatus::BudgetStop: return "budget-stop";
    }
    return "running";
}

AgentStatus agent_status_from_string(std::string_view s) {
    for (auto st : {AgentStatus::Running, AgentStatus::Finished, AgentStatus::TurnLimit, AgentStatus::BudgetStop}) {
        if (to_string(st) == s) return st;
    }
    throw SchemaError("unknown agent status '" + std::string(s) + "'");
}

AgentState fresh_state(const AgentNodeSpec& node, std::string task, int depth) {
    AgentState s;
    s.node = node;
    s.task = std::move(task);
    s.depth = depth;
    return s;
}

json to_json(const AgentState& s) {
    json transcript = json::array();
    for (const auto& r : s.transcript) transcript.push_back(to_json(r, false));
    json j{{"node_id", s.node.id},     {"task", s.task},
           {"depth", s.depth},         {"transcript", transcript},
           {"turns_used", s.turns_used}, {"status", to_string(s.status)},
           {"final_text", s.final_text}};
    if (s.pending) {
        j["pending"] = {{"record", to_json(s.pending->record, false)},
                        {"parent", s.pending->request.parent},
                        {"child", s.pending->request.child},
                        {"subtask", s.pending->request.subtask},
                        {"depth", s.pending->request.depth}};
    }
    return j;
}

AgentState agent_state_from_json(const json& j, const AgentGraphSpec& graph) {
    AgentState s;
    s.node = graph.node(j.at("node_id").get<std::string>());
    s.task = j.at("task").get<std::string>();
    s.depth = j.at("depth").get<int>();
    for (const auto& r : j.at("transcript")) s.transcript.push_back(turn_record_from_json(r));
    s.turns_used = j.at("turns_used").get<int>();
    s.status = agent_status_from_string(j.at("status").get<std::string>());
    s.final_text = j.value("final_text", "");
    if (j.contains("pending")) {
        const auto& p = j.at("pending");
        s.pending = PendingDelegation{turn_record_from_json(p.at("record")),
                                      {p.at("parent").get<std::string>(), p.at("child").get<std::string>(),
                                       p.at("subtask").get<std::string>(), p.at("depth").get<int>()}};
    }
    return s;
}

void RecordJournal::append(const TurnRecord& r) {
    std::lock_guard lock(mutex_);
    records_.push_back(r);
}

void RecordJournal::append_all(const std::vector<TurnRecord>& rs) {
    std::lock_guard lock(mutex_);
    records_.insert(records_.end(), rs.begin(), rs.end());
}

std::vector<TurnRecord> RecordJournal::entries() const {
    std::lock_guard lock(mutex_);
    return records_;
}

TurnOutcome classify_response(std::string_view text, const AgentNodeSpec& node, int depth) {
    if (contains_tool_block(text)) {
        std::optional<ToolInvocation> call;
        try {
            call = parse_tool_call(text);
        } catch (const MalformedCall& e) {
            return malformed(malformed_call_artifact(e, text));
        } catch (const MultipleCalls& e) {
            return malformed(multiple_calls_artifact(e, text));
        }
        TurnOutcome o;
        const auto& server = call->server_name;
        if (server.rfind(kAgentServerPrefix, 0) == 0 && call->tool_name == kDelegateTool) {
            const std::string child = server.substr(kAgentServerPrefix.size());
            const bool is_sub_agent =
                std::find(node.sub_agents.begin(), node.sub_agents.end(), child) != node.sub_agents.end();
            const auto& args = call->arguments;
            const bool valid_args = args.size() == 1 && args.contains("subtask") && args["subtask"].is_string() &&
                                    !trim(args["subtask"].get<std::string>()).empty();
            if (is_sub_agent && valid_args) {
                o.kind = TurnKind::Delegate;
                o.delegation = DelegationRequest{node.id, child, args["subtask"].get<std::string>(), depth + 1};
                o.call = std::move(call);
                return o;
            }
        }
        o.kind = TurnKind::ToolCall;
        o.call = std::move(call);
        return o;
    }
    if (auto boxed = extract_boxed_answer(text)) {
        TurnOutcome o;
        o.kind = TurnKind::Final;
        o.final_text = trim(*boxed);
        return o;
    }
    if (auto final_text = sentinel_final(text)) {
        TurnOutcome o;
        o.kind = TurnKind::Final;
        o.final_text = *final_text;
        return o;
    }
    return malformed(malformed_turn_artifact(text));
}

bool enforce_turn_limit(const AgentState& state) { return state.turns_used < state.node.max_turns; }

std::string render_system_prompt(const AgentNodeSpec& node, const RuntimeEnv& env) {
    std::string listing;
    std::string current_server;
    if (env.tools != nullptr) {
        for (const auto& id : node.tools) {
            const ToolContract* c = env.tools->find(id);
            if (c == nullptr) continue;
            if (c->server_name != current_server) {
                current_server = c->server_name;
                listing += "\n## Server name: " + current_server + "\n";
            }
            listing += "### Tool name: " + c->tool_name + "\nDescription: " + c->description +
                       "\nInput JSON schema: " + contract_json_schema(*c).at("schema").dump() + "\n";
        }
    }
    for (const auto& child_id : node.sub_agents) {
        std::string description = "sub-agent";
        if (env.graph != nullptr) {
            if (const auto* child = env.graph->find(child_id)) description = child->description;
        }
        listing += "\n## Server name: agent-" + child_id + "\n### Tool name: delegate\nDescription: " + description +
                   "\nInput JSON schema: "
                   "{\"properties\":{\"subtask\":{\"description\":\"Self-contained subtask for this agent\","
                   "\"type\":\"string\"}},\"required\":[\"subtask\"],\"type\":\"object\"}\n";
    }
    std::string system;
    if (env.prompts != nullptr && env.prompts->contains("tool_use_system.txt")) {
        system = render_template(env.prompts->get("tool_use_system.txt"),
                                 {{"formatted_date", env.formatted_date}, {"tool_listing", listing}});
        system += "\n\n";
    }
    system += node.prompt;
    return system;
}

ChatRequest build_request(const AgentState& state, const RuntimeEnv& env) {
    ChatRequest req;
    req.temperature = env.backends != nullptr && env.backends->contains(state.node.backend)
                          ? env.backends->get(state.node.backend).profile().temperature
                          : 0.0;
    int index = 0;
    auto add = [&](Role role, std::string content) {
        req.messages.push_back({role, std::move(content), index++, state.node.id, {}});
    };
    add(Role::System, render_system_prompt(state.node, env));
    add(Role::User, state.task);
    for (const auto& r : state.transcript) {
        add(Role::Assistant, r.response.content);
        if (!r.observation.empty()) add(Role::User, r.observation);
    }
    return req;
}

TurnOutcome step_turn(AgentState& state, RuntimeEnv& env) {
    const auto started = std::chrono::steady_clock::now();
    TurnRecord record;
    record.node_id = state.node.id;
    record.turn_index = state.turns_used;
    const ChatRequest request = build_request(state, env);
    record.request = request.messages;

    TurnOutcome outcome;
    BackendHandle handle{&env.backends->get(state.node.backend), env.backend_retry, &sink_of(env), state.node.id,
                         "turn", estimate_tokens};
    std::string text;
    try {
        text = call_backend(handle, request).message.content;
    } catch (const RetriesExhausted& e) {
        outcome = malformed(backend_fault_artifact(FaultType::TransientFailure, e.last_failure(), state.node.id));
    } catch (const Nonretryable& e) {
        outcome = malformed(backend_fault_artifact(FaultType::PermanentFailure, e.failure(), state.node.id));
    }
    if (!outcome.fault && env.budget != nullptr && env.budget->wall_clock_exceeded(sink_of(env), state.node.id)) {
        state.status = AgentStatus::BudgetStop;
        state.final_text = last_assistant_text(state);
        return malformed(budget_exceeded_artifact("wall-clock", env.budget->spec().wall_clock_limit,
                                                  {"backend:" + state.node.id, ""}, "the reply arrived too late"));
    }
    record.response = {Role::Assistant, text, static_cast<int>(request.messages.size()), state.node.id, {}};
    if (outcome.fault) {
        record.kind = TurnKind::Malformed;
        record.fault = outcome.fault;
        record.observation = render_fault(*outcome.fault);
        sink_of(env).emit(EventKind::Fault, state.node.id, {{"origin", "backend"}, {"fault", to_json(*outcome.fault)}});
        record.wall_time = since(started);
        complete_turn(state, env, std::move(record));
        return outcome;
    }

    if (state.node.heavy_mode && state.node.heavy_mode->trigger == ActivationTrigger::Sentinel &&
        maybe_activate_heavy(state.node, std::string_view(text))) {
        const auto heavy = run_heavy(state.node, state.task, env, state.depth);
        if (heavy.answer) {
            outcome.kind = TurnKind::Final;
            outcome.final_text = *heavy.answer;
            record.kind = TurnKind::Final;
            record.final_text = *heavy.answer;
        } else {
            outcome = malformed(*heavy.fault);
            record.kind = TurnKind::Malformed;
            record.fault = heavy.fault;
            record.observation = heavy_observation(heavy);
        }
        record.wall_time = since(started);
        complete_turn(state, env, std::move(record));
        return outcome;
    }

    outcome = classify_response(text, state.node, state.depth);
    record.kind = outcome.kind;
    switch (outcome.kind) {
        case TurnKind::Final:
            record.final_text = outcome.final_text;
            break;
        case TurnKind::Malformed:
            record.fault = outcome.fault;
            record.observation = render_fault(*outcome.fault);
            sink_of(env).emit(EventKind::Fault, state.node.id, {{"origin", "agent"}, {"fault", to_json(*outcome.fault)}});
            break;
        case TurnKind::ToolCall: {
            record.tool_invocation = outcome.call;
            ToolOutcome result;
            const bool bound = std::find(state.node.tools.begin(), state.node.tools.end(), outcome.call->tool_id()) !=
                               state.node.tools.end();
            if (!bound) {
                result = ToolOutcome::failed(unavailable_artifact(*outcome.call, "it is not bound to this agent"));
                sink_of(env).emit(EventKind::Fault, state.node.id, {{"origin", "tool"}, {"fault", to_json(*result.fault)}});
            } else {
                result = invoke_tool(*env.tools, *outcome.call, env.tool_retry, &sink_of(env), state.node.id);
            }
            record.observation = render_observation(*outcome.call, result);
            record.tool_outcome = std::move(result);
            break;
        }
        case TurnKind::Delegate:
            record.tool_invocation = outcome.call;
            record.delegate_to = outcome.delegation->child;
            record.wall_time = since(started);
            state.pending = PendingDelegation{std::move(record), *outcome.delegation};
            finish_delegation(state, env, std::chrono::steady_clock::now());
            return outcome;
    }
    record.wall_time = since(started);
    complete_turn(state, env, std::move(record));
    return outcome;
}

std::string last_assistant_text(const AgentState& state) {
    for (auto it = state.transcript.rbegin(); it != state.transcript.rend(); ++it) {
        if (!it->final_text.empty()) return it->final_text;
        if (!trim(it->response.content).empty()) return trim(it->response.content);
    }
    return {};
}

std::string run_agent(AgentState& state, RuntimeEnv& env) {
    FrontierGuard guard(env, state);
    if (state.status != AgentStatus::Running) return state.final_text;

    if (state.pending) {
        finish_delegation(state, env, std::chrono::steady_clock::now());
        if (state.transcript.back().kind == TurnKind::Final) state.status = AgentStatus::Finished;
    } else if (state.transcript.empty() && maybe_activate_heavy(state.node, std::nullopt)) {
        if (env.budget != nullptr && env.budget->wall_clock_exceeded(sink_of(env), state.node.id)) {
            state.status = AgentStatus::BudgetStop;
            return state.final_text;
        }
        const auto started = std::chrono::steady_clock::now();
        const auto heavy = run_heavy(state.node, state.task, env, state.depth);
        TurnRecord record;
        record.node_id = state.node.id;
        record.turn_index = 0;
        if (heavy.answer) {
            record.kind = TurnKind::Final;
            record.final_text = *heavy.answer;
            record.response = {Role::Assistant, heavy.summary + "\nFinal Answer: \\boxed{" + *heavy.answer + "}", 0,
                               state.node.id, {}};
        } else {
            record.kind = TurnKind::Malformed;
            record.fault = heavy.fault;
            record.response = {Role::Assistant, heavy.summary, 0, state.node.id, {}};
            record.observation = heavy_observation(heavy);
        }
        record.wall_time = since(started);
        complete_turn(state, env, std::move(record));
        if (heavy.answer) {
            state.status = AgentStatus::Finished;
            state.final_text = *heavy.answer;
            return state.final_text;
        }
    }

    while (state.status == AgentStatus::Running) {
        if (!state.transcript.empty() && state.transcript.back().kind == TurnKind::Final) {
            state.status = AgentStatus::Finished;
            state.final_text = state.transcript.back().final_text;
            break;
        }
        if (!enforce_turn_limit(state)) {
            state.status = AgentStatus::TurnLimit;
            state.final_text = last_assistant_text(state);
            break;
        }
        if (env.budget != nullptr && env.budget->wall_clock_exceeded(sink_of(env), state.node.id)) {
            state.status = AgentStatus::BudgetStop;
            state.final_text = last_assistant_text(state);
            break;
        }
        const auto outcome = step_turn(state, env);
        if (outcome.kind == TurnKind::Final) {
            state.status = AgentStatus::Finished;
            state.final_text = outcome.final_text;
        }
    }
    return state.final_text;
}

DelegationResult delegate_subtask(const DelegationRequest& request, RuntimeEnv& env) {
    EventSink& log = sink_of(env);
    const FaultContext context{"agent-" + request.child, sha256_hex(request.subtask)};
    const AgentNodeSpec& child = env.graph->node(request.child);

    AgentState child_state;
    const bool resumed = env.resume_chain != nullptr && !env.resume_chain->empty() &&
                         env.resume_chain->front().node.id == request.child;
    if (resumed) {
        child_state = std::move(env.resume_chain->front());
        env.resume_chain->pop_front();
    } else {
        if (request.depth >= env.delegation_depth_limit) {
            auto fault = budget_exceeded_artifact("delegation-depth", env.delegation_depth_limit, context,
                                                  "delegating to '" + request.child + "' would reach depth " +
                                                      std::to_string(request.depth));
            log.emit(EventKind::Fault, request.parent, {{"origin", "delegation"}, {"fault", to_json(fault)}});
            return {"", fault, AgentStatus::BudgetStop};
        }
        if (env.budget != nullptr && !env.budget->try_spawn(log, request.parent)) {
            const auto limit = env.budget->spec().max_spawned_agents;
            auto fault = budget_exceeded_artifact("spawned-agents", limit, context,
                                                  "cannot start agent '" + request.child + "'");
            log.emit(EventKind::Fault, request.parent, {{"origin", "delegation"}, {"fault", to_json(fault)}});
            return {"", fault, AgentStatus::BudgetStop};
        }
        log.emit(EventKind::Delegation, request.parent,
                 {{"phase", "start"},
                  {"parent", request.parent},
                  {"child", request.child},
                  {"depth", request.depth},
                  {"subtask", request.subtask}});
        std::string task = request.subtask;
        if (child.input_processor.enabled) {
            const auto& backend_id = child.input_processor.backend.empty() ? child.backend : child.input_processor.backend;
            BackendHandle h{&env.backends->get(backend_id), env.backend_retry, &log, child.id, "normalize",
                            estimate_tokens};
            task = render_task(augment_query(request.subtask, h, *env.prompts));
        }
        child_state = fresh_state(child, std::move(task), request.depth);
    }

    std::string text = run_agent(child_state, env);
    if (child.output_processor.enabled && child_state.status == AgentStatus::Finished) {
        const auto& backend_id = child.output_processor.backend.empty() ? child.backend : child.output_processor.backend;
        BackendHandle h{&env.backends->get(backend_id), env.backend_retry, &log, child.id, "synthesize",
                        estimate_tokens};
        try {
            text = synthesize_output(child_state.transcript, identity_task(request.subtask), h, *env.prompts).final_answer;
        } catch (const EmptyTranscriptError&) {
        }
    }
    log.emit(EventKind::Delegation, request.parent,
             {{"phase", "end"},
              {"parent", request.parent},
              {"child", request.child},
              {"status", to_string(child_state.status)},
              {"turns", child_state.turns_used},
              {"result", text}});
    return {text, std::nullopt, child_state.status};
}

}  // namespace agentflow
