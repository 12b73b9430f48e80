#include "agentflow/graph_spec.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <regex>
#include <set>

namespace agentflow {

const AgentNodeSpec* AgentGraphSpec::find(std::string_view id) const {
    for (const auto& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

const AgentNodeSpec& AgentGraphSpec::node(std::string_view id) const {
    if (const auto* n = find(id)) return *n;
    throw UnknownNodeError(std::string(id));
}

std::optional<std::size_t> AgentGraphSpec::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id == id) return i;
    }
    return std::nullopt;
}

std::string_view to_string(HeavyPolicy p) {
    return p == HeavyPolicy::Ensemble ? "ensemble" : "verification";
}

std::string_view to_string(ActivationTrigger t) {
    switch (t) {
        case ActivationTrigger::Always: return "always";
        case ActivationTrigger::Sentinel: return "sentinel";
        case ActivationTrigger::Never: return "never";
    }
    return "always";
}

std::string_view to_string(AggregationMode m) {
    return m == AggregationMode::Majority ? "majority" : "weighted";
}

namespace {

// Field-shape helpers. `where` is the dotted path used in error messages.
class ObjectReader {
public:
    ObjectReader(const ordered_json& obj, std::string where, std::set<std::string> allowed)
        : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw SchemaError(label() + "expected an object");
        for (const auto& [key, _] : obj_.items()) {
            if (!allowed.count(key)) throw SchemaError(label() + "unknown field '" + key + "'");
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const ordered_json& required(const std::string& key) const {
        if (!obj_.contains(key)) throw MissingFieldError(path(key));
        return obj_.at(key);
    }

    std::string string(const std::string& key) const {
        const auto& v = required(key);
        if (!v.is_string()) throw SchemaError(path(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::string string_or(const std::string& key, std::string fallback) const {
        return has(key) ? string(key) : fallback;
    }

    long long integer(const std::string& key) const {
        const auto& v = required(key);
        if (!v.is_number_integer()) throw SchemaError(path(key) + ": expected an integer");
        return v.get<long long>();
    }

    double number(const std::string& key) const {
        const auto& v = required(key);
        if (!v.is_number()) throw SchemaError(path(key) + ": expected a number");
        return v.get<double>();
    }

    bool boolean(const std::string& key) const {
        const auto& v = required(key);
        if (!v.is_boolean()) throw SchemaError(path(key) + ": expected a boolean");
        return v.get<bool>();
    }

    std::vector<std::string> strings(const std::string& key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        const auto& v = obj_.at(key);
        if (!v.is_array()) throw SchemaError(path(key) + ": expected a list of strings");
        for (const auto& item : v) {
            if (!item.is_string()) throw SchemaError(path(key) + ": expected a list of strings");
            out.push_back(item.get<std::string>());
        }
        return out;
    }

    std::string path(const std::string& key) const {
        return where_.empty() ? key : where_ + "." + key;
    }

private:
    std::string label() const { return where_.empty() ? "" : where_ + ": "; }

    const ordered_json& obj_;
    std::string where_;
};

int to_int(long long v) {
    return static_cast<int>(std::clamp<long long>(v, INT32_MIN, INT32_MAX));
}

HeavyPolicy parse_policy(const std::string& s, const std::string& where) {
    if (s == "ensemble") return HeavyPolicy::Ensemble;
    if (s == "verification") return HeavyPolicy::Verification;
    throw SchemaError(where + ": unknown policy '" + s + "'");
}

ActivationTrigger parse_trigger(const std::string& s, const std::string& where) {
    if (s == "always") return ActivationTrigger::Always;
    if (s == "sentinel") return ActivationTrigger::Sentinel;
    if (s == "never") return ActivationTrigger::Never;
    throw SchemaError(where + ": unknown trigger '" + s + "'");
}

AggregationMode parse_aggregation(const std::string& s, const std::string& where) {
    if (s == "majority") return AggregationMode::Majority;
    if (s == "weighted") return AggregationMode::Weighted;
    throw SchemaError(where + ": unknown aggregation '" + s + "'");
}

std::optional<ProcessorSpec> parse_processor(const ordered_json& parent, const std::string& key,
                                             const std::string& where) {
    if (!parent.contains(key)) return std::nullopt;
    const auto& v = parent.at(key);
    ProcessorSpec p;
    if (v.is_boolean()) {
        p.enabled = v.get<bool>();
        return p;
    }
    ObjectReader r(v, where + "." + key, {"enabled", "backend"});
    p.enabled = r.has("enabled") ? r.boolean("enabled") : true;
    p.backend = r.string_or("backend", "");
    return p;
}

HeavyModeSpec parse_heavy(const ordered_json& v, const std::string& where) {
    ObjectReader r(v, where,
                   {"policy", "members", "rounds", "trigger", "aggregation", "verifier_backend"});
    HeavyModeSpec h;
    h.policy = parse_policy(r.string("policy"), r.path("policy"));
    if (r.has("members")) {
        const auto& members = r.required("members");
        if (!members.is_array()) throw SchemaError(r.path("members") + ": expected a list");
        std::size_t i = 0;
        for (const auto& m : members) {
            ObjectReader mr(m, r.path("members") + "[" + std::to_string(i++) + "]",
                            {"backend", "prompt_variant", "weight"});
            EnsembleMember member;
            member.backend = mr.string("backend");
            member.prompt_variant = mr.string_or("prompt_variant", "default");
            member.weight = mr.has("weight") ? mr.number("weight") : 1.0;
            h.members.push_back(std::move(member));
        }
    }
    h.rounds = r.has("rounds") ? to_int(r.integer("rounds")) : 1;
    h.trigger = parse_trigger(r.string_or("trigger", "always"), r.path("trigger"));
    h.aggregation = parse_aggregation(r.string_or("aggregation", "majority"), r.path("aggregation"));
    h.verifier_backend = r.string_or("verifier_backend", "");
    return h;
}

struct ParsedNode {
    AgentNodeSpec spec;
    std::optional<ProcessorSpec> input;
    std::optional<ProcessorSpec> output;
};

ParsedNode parse_node(const std::string& id, const ordered_json& v) {
    const std::string where = "nodes." + id;
    ObjectReader r(v, where,
                   {"id", "description", "prompt", "backend", "sub_agents", "tools",
                    "input_processor", "output_processor", "max_turns", "heavy_mode", "shared"});
    ParsedNode out;
    auto& n = out.spec;
    n.id = id;
    if (r.has("id") && r.string("id") != id) {
        throw SchemaError(where + ".id: '" + r.string("id") + "' does not match its key");
    }
    n.description = r.string("description");
    n.prompt = r.string("prompt");
    n.backend = r.string("backend");
    n.sub_agents = r.strings("sub_agents");
    n.tools = r.strings("tools");
    if (r.has("max_turns")) n.max_turns = to_int(r.integer("max_turns"));
    if (r.has("heavy_mode") && !v.at("heavy_mode").is_null()) {
        n.heavy_mode = parse_heavy(v.at("heavy_mode"), r.path("heavy_mode"));
    }
    if (r.has("shared")) n.shared = r.boolean("shared");
    out.input = parse_processor(v, "input_processor", where);
    out.output = parse_processor(v, "output_processor", where);
    return out;
}

ordered_json processor_to_json(const ProcessorSpec& p) {
    ordered_json j;
    j["enabled"] = p.enabled;
    j["backend"] = p.backend;
    return j;
}

}  // namespace

AgentGraphSpec parse_graph_spec(std::string_view document) {
    const ordered_json doc = parse_json_document(document);
    ObjectReader top(doc, "", {"version", "entry", "budgets", "nodes"});

    AgentGraphSpec spec;
    spec.version = top.string_or("version", "1");
    spec.entry = top.string("entry");

    if (top.has("budgets")) {
        ObjectReader b(top.required("budgets"), "budgets",
                       {"max_spawned_agents", "max_verification_rounds", "wall_clock_limit"});
        if (b.has("max_spawned_agents")) {
            spec.budgets.max_spawned_agents = to_int(b.integer("max_spawned_agents"));
        }
        if (b.has("max_verification_rounds")) {
            spec.budgets.max_verification_rounds = to_int(b.integer("max_verification_rounds"));
        }
        if (b.has("wall_clock_limit")) spec.budgets.wall_clock_limit = b.number("wall_clock_limit");
    }

    const auto& nodes = top.required("nodes");
    if (!nodes.is_object()) throw SchemaError("nodes: expected an object keyed by node id");
    for (const auto& [id, body] : nodes.items()) {
        ParsedNode parsed = parse_node(id, body);
        // Processors default on for the entry node and off elsewhere.
        const bool is_entry = id == spec.entry;
        parsed.spec.input_processor = parsed.input.value_or(ProcessorSpec{is_entry, ""});
        parsed.spec.output_processor = parsed.output.value_or(ProcessorSpec{is_entry, ""});
        spec.nodes.push_back(std::move(parsed.spec));
    }
    return spec;
}

AgentGraphSpec load_graph_spec(const std::filesystem::path& path) {
    return parse_graph_spec(read_file(path));
}

ordered_json graph_spec_to_json(const AgentGraphSpec& spec) {
    ordered_json j;
    j["version"] = spec.version;
    j["entry"] = spec.entry;
    j["budgets"] = {{"max_spawned_agents", spec.budgets.max_spawned_agents},
                    {"max_verification_rounds", spec.budgets.max_verification_rounds},
                    {"wall_clock_limit", spec.budgets.wall_clock_limit}};
    ordered_json nodes = ordered_json::object();
    for (const auto& n : spec.nodes) {
        ordered_json node;
        node["description"] = n.description;
        node["prompt"] = n.prompt;
        node["backend"] = n.backend;
        node["sub_agents"] = n.sub_agents;
        node["tools"] = n.tools;
        node["input_processor"] = processor_to_json(n.input_processor);
        node["output_processor"] = processor_to_json(n.output_processor);
        node["max_turns"] = n.max_turns;
        node["shared"] = n.shared;
        if (n.heavy_mode) {
            const auto& h = *n.heavy_mode;
            ordered_json heavy;
            heavy["policy"] = to_string(h.policy);
            ordered_json members = ordered_json::array();
            for (const auto& m : h.members) {
                members.push_back(ordered_json{{"backend", m.backend},
                                               {"prompt_variant", m.prompt_variant},
                                               {"weight", m.weight}});
            }
            heavy["members"] = std::move(members);
            heavy["rounds"] = h.rounds;
            heavy["trigger"] = to_string(h.trigger);
            heavy["aggregation"] = to_string(h.aggregation);
            heavy["verifier_backend"] = h.verifier_backend;
            node["heavy_mode"] = std::move(heavy);
        }
        nodes[n.id] = std::move(node);
    }
    j["nodes"] = std::move(nodes);
    return j;
}

std::string serialize_graph_spec(const AgentGraphSpec& spec) {
    return graph_spec_to_json(spec).dump(2);
}

std::string graph_digest(const AgentGraphSpec& spec) {
    return sha256_hex(graph_spec_to_json(spec).dump());
}

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::MissingEntry: return "MissingEntryViolation";
        case ViolationKind::InvalidNodeId: return "InvalidNodeIdViolation";
        case ViolationKind::DanglingReference: return "DanglingReferenceViolation";
        case ViolationKind::Cycle: return "CycleViolation";
        case ViolationKind::DuplicateSubAgent: return "DuplicateSubAgentViolation";
        case ViolationKind::DuplicateTool: return "DuplicateToolViolation";
        case ViolationKind::InvalidField: return "InvalidFieldViolation";
        case ViolationKind::InvalidBudget: return "InvalidBudgetViolation";
        case ViolationKind::InvalidHeavyMode: return "InvalidHeavyModeViolation";
    }
    return "Violation";
}

std::string describe(const Violation& v) {
    std::string out(to_string(v.kind));
    out += "{";
    if (!v.node.empty()) out += "node: " + v.node;
    if (!v.path.empty()) {
        out += std::string(v.node.empty() ? "" : ", ") + "path: [";
        for (std::size_t i = 0; i < v.path.size(); ++i) out += (i ? "," : "") + v.path[i];
        out += "]";
    }
    if (!v.missing.empty()) out += ", missing: " + v.missing;
    if (!v.detail.empty()) out += std::string(out.back() == '{' ? "" : ", ") + v.detail;
    out += "}";
    return out;
}

namespace {

void check_cycles(const AgentGraphSpec& spec, ValidationReport& report) {
    // Iterative three-colour DFS in declaration order. Each back edge yields
    // one CycleViolation whose path runs from the edge target back to itself.
    enum class Colour { White, Grey, Black };
    std::map<std::string, Colour> colour;
    for (const auto& n : spec.nodes) colour[n.id] = Colour::White;

    for (const auto& root : spec.nodes) {
        if (colour[root.id] != Colour::White) continue;
        struct Frame {
            const AgentNodeSpec* node;
            std::size_t next_child;
        };
        std::vector<Frame> stack{{&root, 0}};
        colour[root.id] = Colour::Grey;
        while (!stack.empty()) {
            Frame& top = stack.back();
            if (top.next_child >= top.node->sub_agents.size()) {
                colour[top.node->id] = Colour::Black;
                stack.pop_back();
                continue;
            }
            const std::string& child_id = top.node->sub_agents[top.next_child++];
            const AgentNodeSpec* child = spec.find(child_id);
            if (child == nullptr) continue;  // reported as dangling
            if (colour[child_id] == Colour::Grey) {
                Violation v{ViolationKind::Cycle, child_id, {}, {}, {}};
                auto it = std::find_if(stack.begin(), stack.end(),
                                       [&](const Frame& f) { return f.node->id == child_id; });
                for (; it != stack.end(); ++it) v.path.push_back(it->node->id);
                v.path.push_back(child_id);
                report.push_back(std::move(v));
            } else if (colour[child_id] == Colour::White) {
                colour[child_id] = Colour::Grey;
                stack.push_back({child, 0});
            }
        }
    }
}

}  // namespace

ValidationReport validate_graph(const AgentGraphSpec& spec) {
    ValidationReport report;
    static const std::regex kNodeId("[a-z0-9_-]+");

    if (spec.entry.empty() || spec.find(spec.entry) == nullptr) {
        report.push_back({ViolationKind::MissingEntry, {}, {}, spec.entry,
                          "entry '" + spec.entry + "' is not a declared node"});
    }

    const auto& b = spec.budgets;
    if (b.max_spawned_agents <= 0) {
        report.push_back({ViolationKind::InvalidBudget, {}, {}, {}, "max_spawned_agents must be > 0"});
    }
    if (b.max_verification_rounds <= 0) {
        report.push_back(
            {ViolationKind::InvalidBudget, {}, {}, {}, "max_verification_rounds must be > 0"});
    }
    if (!(b.wall_clock_limit > 0)) {
        report.push_back({ViolationKind::InvalidBudget, {}, {}, {}, "wall_clock_limit must be > 0"});
    }

    std::set<std::string> seen_ids;
    for (const auto& n : spec.nodes) {
        if (!std::regex_match(n.id, kNodeId) || !seen_ids.insert(n.id).second) {
            report.push_back({ViolationKind::InvalidNodeId, n.id, {}, {},
                              "node ids must be unique and match [a-z0-9_-]+"});
        }
        if (n.max_turns < 1) {
            report.push_back({ViolationKind::InvalidField, n.id, {}, {}, "max_turns must be >= 1"});
        }
        if (n.description.empty()) {
            report.push_back({ViolationKind::InvalidField, n.id, {}, {}, "description is empty"});
        }
        if (n.prompt.empty()) {
            report.push_back({ViolationKind::InvalidField, n.id, {}, {}, "prompt is empty"});
        }
        std::set<std::string> subs;
        for (const auto& s : n.sub_agents) {
            if (!subs.insert(s).second) {
                report.push_back({ViolationKind::DuplicateSubAgent, n.id, {}, s, {}});
            }
            if (spec.find(s) == nullptr) {
                report.push_back({ViolationKind::DanglingReference, n.id, {}, s, {}});
            }
        }
        std::set<std::string> tools;
        for (const auto& t : n.tools) {
            if (!tools.insert(t).second) {
                report.push_back({ViolationKind::DuplicateTool, n.id, {}, t, {}});
            }
        }
        if (n.heavy_mode) {
            const auto& h = *n.heavy_mode;
            auto heavy = [&](std::string detail) {
                report.push_back({ViolationKind::InvalidHeavyMode, n.id, {}, {}, std::move(detail)});
            };
            if (h.rounds < 1) heavy("rounds must be >= 1");
            for (const auto& m : h.members) {
                if (m.weight < 0) heavy("member weights must be nonnegative");
                if (m.backend.empty()) heavy("member backend is empty");
            }
            if (h.policy == HeavyPolicy::Ensemble) {
                const bool any_positive = std::any_of(h.members.begin(), h.members.end(),
                                                      [](const auto& m) { return m.weight > 0; });
                if (h.members.empty()) heavy("ensemble policy needs at least one member");
                else if (!any_positive) heavy("ensemble member weights are all zero");
            } else if (h.rounds > b.max_verification_rounds) {
                heavy("rounds " + std::to_string(h.rounds) + " exceed max_verification_rounds " +
                      std::to_string(b.max_verification_rounds));
            }
        }
    }

    check_cycles(spec, report);
    return report;
}

std::vector<NodeId> delegation_closure(const AgentGraphSpec& spec, std::string_view start) {
    const AgentNodeSpec& first = spec.node(start);
    std::vector<NodeId> order{first.id};
    std::set<std::string> visited{first.id};
    std::deque<const AgentNodeSpec*> queue{&first};
    while (!queue.empty()) {
        const AgentNodeSpec* current = queue.front();
        queue.pop_front();
        for (const auto& child_id : current->sub_agents) {
            const AgentNodeSpec* child = spec.find(child_id);
            if (child == nullptr || !visited.insert(child_id).second) continue;
            order.push_back(child_id);
            queue.push_back(child);
        }
    }
    return order;
}

}  // namespace agentflow
