#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <string>

#include "agentflow/events.hpp"
#include "agentflow/graph_spec.hpp"

namespace agentflow {

struct BudgetRemaining {
    int spawned_agents = 0;
    int verification_rounds = 0;
    double wall_clock_limit = 0;  // seconds
    double elapsed = 0;           // seconds consumed so far

    double wall_clock_remaining() const { return wall_clock_limit - elapsed; }
    bool operator==(const BudgetRemaining&) const = default;
};

BudgetRemaining initial_budgets(const BudgetSpec& spec);
json to_json(const BudgetRemaining& b);
BudgetRemaining budget_remaining_from_json(const json& j);

enum class BudgetEventKind { Spawn, VerificationRound, Tick };

struct BudgetEvent {
    BudgetEventKind kind = BudgetEventKind::Tick;
    double elapsed = 0;  // seconds since run start, observed with the event
};

struct BudgetDecision {
    BudgetRemaining remaining;
    bool stop = false;
    std::string exhausted;  // "spawned-agents", "verification-rounds" or "wall-clock"
};

// Pure: charges the event against the matching budget. Spawn and round
// events decrement their counter, or stop without charging when it is
// already zero; every event advances elapsed time (never backwards) and
// stops once the wall-clock limit is reached.
BudgetDecision enforce_budget(const BudgetRemaining& budgets, const BudgetEvent& event);

// Thread-safe owner of the run's remaining budgets. Emits one `budget` event
// per exhausted budget kind.
class BudgetLedger {
public:
    explicit BudgetLedger(const BudgetSpec& spec);
    BudgetLedger(const BudgetSpec& spec, const BudgetRemaining& restored);

    bool try_spawn(EventSink& log, const std::string& node_id);
    bool try_round(EventSink& log, const std::string& node_id);
    // True once the wall-clock budget is exhausted.
    bool wall_clock_exceeded(EventSink& log, const std::string& node_id);
    bool wall_clock_exceeded() const;

    BudgetRemaining snapshot() const;
    const BudgetSpec& spec() const { return spec_; }

private:
    bool apply(BudgetEventKind kind, EventSink& log, const std::string& node_id);
    double elapsed_now() const;

    BudgetSpec spec_;
    mutable std::mutex mutex_;
    BudgetRemaining remaining_;
    double elapsed_offset_ = 0;
    std::chrono::steady_clock::time_point started_;
    std::atomic<bool> wall_clock_stop_{false};
    bool reported_spawn_ = false;
    bool reported_rounds_ = false;
    bool reported_wall_clock_ = false;
};

}  // namespace agentflow
