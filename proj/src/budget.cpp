#include "agentflow/budget.hpp"

#include <algorithm>

namespace agentflow {

BudgetRemaining initial_budgets(const BudgetSpec& spec) {
    return {spec.max_spawned_agents, spec.max_verification_rounds, spec.wall_clock_limit, 0.0};
}

json to_json(const BudgetRemaining& b) {
    return {{"spawned_agents", b.spawned_agents},
            {"verification_rounds", b.verification_rounds},
            {"wall_clock_limit", b.wall_clock_limit},
            {"elapsed", b.elapsed}};
}

BudgetRemaining budget_remaining_from_json(const json& j) {
    return {j.at("spawned_agents").get<int>(), j.at("verification_rounds").get<int>(),
            j.at("wall_clock_limit").get<double>(), j.at("elapsed").get<double>()};
}

BudgetDecision enforce_budget(const BudgetRemaining& budgets, const BudgetEvent& event) {
    BudgetDecision d{budgets, false, {}};
    d.remaining.elapsed = std::max(budgets.elapsed, event.elapsed);
    if (d.remaining.elapsed >= d.remaining.wall_clock_limit) {
        d.stop = true;
        d.exhausted = "wall-clock";
        return d;
    }
    switch (event.kind) {
        case BudgetEventKind::Spawn:
            if (d.remaining.spawned_agents <= 0) {
                d.stop = true;
                d.exhausted = "spawned-agents";
                return d;
            }
            --d.remaining.spawned_agents;
            break;
        case BudgetEventKind::VerificationRound:
            if (d.remaining.verification_rounds <= 0) {
                d.stop = true;
                d.exhausted = "verification-rounds";
                return d;
            }
            --d.remaining.verification_rounds;
            break;
        case BudgetEventKind::Tick:
            break;
    }
    return d;
}

BudgetLedger::BudgetLedger(const BudgetSpec& spec)
    : spec_(spec), remaining_(initial_budgets(spec)), started_(std::chrono::steady_clock::now()) {}

BudgetLedger::BudgetLedger(const BudgetSpec& spec, const BudgetRemaining& restored)
    : spec_(spec), remaining_(restored), elapsed_offset_(restored.elapsed), started_(std::chrono::steady_clock::now()) {}

double BudgetLedger::elapsed_now() const {
    return elapsed_offset_ +
           std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
}

bool BudgetLedger::apply(BudgetEventKind kind, EventSink& log, const std::string& node_id) {
    std::lock_guard lock(mutex_);
    const auto d = enforce_budget(remaining_, {kind, elapsed_now()});
    remaining_ = d.remaining;
    if (!d.stop) return true;
    bool* reported = d.exhausted == "spawned-agents"        ? &reported_spawn_
                     : d.exhausted == "verification-rounds" ? &reported_rounds_
                                                            : &reported_wall_clock_;
    if (d.exhausted == "wall-clock") wall_clock_stop_ = true;
    if (!*reported) {
        *reported = true;
        const double limit = d.exhausted == "spawned-agents"        ? spec_.max_spawned_agents
                             : d.exhausted == "verification-rounds" ? spec_.max_verification_rounds
                                                                    : spec_.wall_clock_limit;
        log.emit(EventKind::Budget, node_id, {{"budget", d.exhausted}, {"limit", limit}, {"signal", "budget-stop"}});
    }
    return false;
}

bool BudgetLedger::try_spawn(EventSink& log, const std::string& node_id) {
    return apply(BudgetEventKind::Spawn, log, node_id);
}

bool BudgetLedger::try_round(EventSink& log, const std::string& node_id) {
    return apply(BudgetEventKind::VerificationRound, log, node_id);
}

bool BudgetLedger::wall_clock_exceeded(EventSink& log, const std::string& node_id) {
    if (wall_clock_stop_) return true;
    return !apply(BudgetEventKind::Tick, log, node_id);
}

bool BudgetLedger::wall_clock_exceeded() const { return wall_clock_stop_; }

BudgetRemaining BudgetLedger::snapshot() const {
    std::lock_guard lock(mutex_);
    BudgetRemaining r = remaining_;
    r.elapsed = std::max(r.elapsed, elapsed_now());
    return r;
}

}  // namespace agentflow
