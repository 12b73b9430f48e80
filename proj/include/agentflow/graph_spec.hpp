#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentflow/errors.hpp"
#include "agentflow/util.hpp"

namespace agentflow {

using NodeId = std::string;

enum class HeavyPolicy { Ensemble, Verification };

// When a node with heavy_mode configured actually enters heavy mode.
enum class ActivationTrigger { Always, Sentinel, Never };

enum class AggregationMode { Majority, Weighted };

struct EnsembleMember {
    std::string backend;
    std::string prompt_variant;
    double weight = 1.0;

    bool operator==(const EnsembleMember&) const = default;
};

struct HeavyModeSpec {
    HeavyPolicy policy = HeavyPolicy::Ensemble;
    std::vector<EnsembleMember> members;
    int rounds = 1;
    ActivationTrigger trigger = ActivationTrigger::Always;
    AggregationMode aggregation = AggregationMode::Majority;
    // Backend used for verdicts in the verification policy; empty means the
    // node's own backend.
    std::string verifier_backend;

    bool operator==(const HeavyModeSpec&) const = default;
};

struct ProcessorSpec {
    bool enabled = false;
    // Empty means the node's backend.
    std::string backend;

    bool operator==(const ProcessorSpec&) const = default;
};

struct AgentNodeSpec {
    NodeId id;
    std::string description;
    std::string prompt;
    std::string backend;
    std::vector<NodeId> sub_agents;
    std::vector<std::string> tools;
    ProcessorSpec input_processor;
    ProcessorSpec output_processor;
    int max_turns = 20;
    std::optional<HeavyModeSpec> heavy_mode;
    // Whether several parents delegating to this node share one instance.
    // Instances never carry context across delegations either way.
    bool shared = false;

    bool operator==(const AgentNodeSpec&) const = default;
};

struct BudgetSpec {
    int max_spawned_agents = 16;
    int max_verification_rounds = 10;
    double wall_clock_limit = 3600.0;  // seconds

    bool operator==(const BudgetSpec&) const = default;
};

struct AgentGraphSpec {
    std::string version = "1";
    NodeId entry;
    BudgetSpec budgets;
    // Declaration order is preserved and is the canonical tie-break order.
    std::vector<AgentNodeSpec> nodes;

    const AgentNodeSpec* find(std::string_view id) const;
    const AgentNodeSpec& node(std::string_view id) const;  // throws UnknownNodeError
    std::optional<std::size_t> index_of(std::string_view id) const;

    bool operator==(const AgentGraphSpec&) const = default;
};

class UnknownNodeError : public Error {
public:
    explicit UnknownNodeError(const std::string& id) : Error("unknown node '" + id + "'") {}
};

// Parses the JSON reference serialization and fills defaults. Shape errors
// only; graph invariants are checked by validate_graph.
AgentGraphSpec parse_graph_spec(std::string_view document);
AgentGraphSpec load_graph_spec(const std::filesystem::path& path);

// Canonical serialization with every default written out explicitly.
ordered_json graph_spec_to_json(const AgentGraphSpec& spec);
std::string serialize_graph_spec(const AgentGraphSpec& spec);

// Content hash over the canonical serialization.
std::string graph_digest(const AgentGraphSpec& spec);

enum class ViolationKind {
    MissingEntry,
    InvalidNodeId,
    DanglingReference,
    Cycle,
    DuplicateSubAgent,
    DuplicateTool,
    InvalidField,
    InvalidBudget,
    InvalidHeavyMode,
};

struct Violation {
    ViolationKind kind;
    NodeId node;                    // offending node; empty for graph-level issues
    std::vector<NodeId> path;       // cycle path, first == last
    std::string missing;            // dangling reference target / duplicate item
    std::string detail;

    bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

std::string_view to_string(ViolationKind kind);
std::string describe(const Violation& v);

// Pure: lists every invariant violation. Empty report means valid.
ValidationReport validate_graph(const AgentGraphSpec& spec);

// Breadth-first over sub_agents edges from start; children visited in
// declaration order; each node at most once.
std::vector<NodeId> delegation_closure(const AgentGraphSpec& spec, std::string_view start);

std::string_view to_string(HeavyPolicy p);
std::string_view to_string(ActivationTrigger t);
std::string_view to_string(AggregationMode m);

}  // namespace agentflow
