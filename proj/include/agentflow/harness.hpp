#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agentflow/controller.hpp"

namespace agentflow {

class ScenarioLoadError : public Error {
public:
    using Error::Error;
};

class UnknownTarget : public Error {
public:
    explicit UnknownTarget(const std::string& target)
        : Error("fault injection target '" + target + "' is neither a registered tool nor a backend profile") {}
};

struct FaultTrigger {
    std::optional<int> ordinal;       // 1-based invocation count of the target
    std::optional<std::string> match;  // substring of the arguments / last message

    bool operator==(const FaultTrigger&) const = default;
};

struct FaultInjection {
    std::string target;  // tool id "server/tool" or backend profile id
    FaultTrigger trigger;
    // Exactly one of the two is set.
    std::optional<FailureClass> fault_class;
    std::optional<std::string> malformed_payload;  // returned in place of the real output
    std::string detail;  // failure message; a class-specific default when empty
    int repeat = 1;
    bool persistent = false;

    bool operator==(const FaultInjection&) const = default;
};

FaultInjection fault_injection_from_json(const json& j);
json to_json(const FaultInjection& f);

struct ExpectedOutcome {
    std::optional<std::string> answer;  // canonical
    std::string status = "finished";
    std::map<std::string, int> event_kinds;      // exact counts
    std::map<std::string, int> event_kinds_min;  // lower bounds
    std::vector<std::string> fault_types;        // each must occur in a fault event

    bool operator==(const ExpectedOutcome&) const = default;
};

struct ScenarioSpec {
    std::string name;
    std::filesystem::path graph;
    std::filesystem::path backends;
    std::optional<std::filesystem::path> tools;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> sandbox;
    std::string query;
    std::optional<AnswerFormat> format;
    std::vector<FaultInjection> injected_faults;
    ExpectedOutcome expected;
    bool deterministic = true;
    std::optional<std::string> judge_backend;  // profile id in `backends`
};

// Relative paths resolve against the spec file's directory. Throws
// ScenarioLoadError for shape problems, missing files or a non-canonical
// expected answer.
ScenarioSpec load_scenario(const std::filesystem::path& path);
ScenarioSpec parse_scenario(const json& j, const std::filesystem::path& base_dir);

// Everything one run of a scenario executes against.
class ScenarioEnvironment {
public:
    AgentGraphSpec graph;
    BackendPool backends;
    ToolRegistry tools;
    PromptLibrary prompts;
    std::string digest;  // tool manifest, corpus, sandbox and injections

    RunContext context();
    json save_injectors() const;
    void restore_injectors(const json& state);

    // Shared with the wrappers installed by inject_fault.
    struct InjectorState {
        FaultInjection injection;
        std::atomic<int> invocations{0};
        std::atomic<int> fired{0};
    };
    std::vector<std::shared_ptr<InjectorState>> injectors;
};

// Loads the graph, backends, tools and corpus of `spec` and arms its faults.
std::unique_ptr<ScenarioEnvironment> build_environment(const ScenarioSpec& spec, const PromptLibrary& prompts);

// Wraps the targeted tool or backend so the configured failure occurs at the
// triggering invocations. Throws UnknownTarget.
void inject_fault(ScenarioEnvironment& env, const FaultInjection& injection);

// Whether the injection fires for the `ordinal`-th invocation of its target
// with `subject` as the matched text, given how often it already fired.
bool injection_fires(const FaultInjection& injection, int ordinal, std::string_view subject, int fired);

enum class MatchVerdict { Exact, JudgeAccepted, Mismatch };

std::string_view to_string(MatchVerdict v);
MatchVerdict match_verdict_from_string(std::string_view s);

struct AnswerEvaluation {
    MatchVerdict verdict = MatchVerdict::Mismatch;
    std::vector<std::string> warnings;
};

// Exact canonical comparison first; then, when a judge is given, one judge
// call whose first reply line is ACCEPT or REJECT. Judge faults degrade to a
// mismatch with a warning.
AnswerEvaluation evaluate_answer(std::string_view produced, std::string_view expected,
                                 const BackendHandle* judge = nullptr, const PromptLibrary* prompts = nullptr,
                                 std::optional<AnswerFormat> format = std::nullopt, std::string_view question = {});

struct Repetition {
    std::string run_id;
    std::string answer;
    std::string status;
    MatchVerdict verdict = MatchVerdict::Mismatch;
    std::string log_digest;
    double wall_seconds = 0;

    bool operator==(const Repetition&) const = default;
};

struct EvalRecord {
    std::string scenario;
    std::string run_id;  // first repetition
    std::string produced;
    std::string expected;
    MatchVerdict match = MatchVerdict::Mismatch;
    std::string status;
    std::vector<Repetition> repetitions;
    std::optional<double> std_dev;  // population std-dev of 0/100 scores
    std::vector<std::string> failures;  // unmet expectations
    std::vector<std::string> warnings;
    bool passed = false;
};

json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const json& j);

struct ScenarioOptions {
    std::optional<std::filesystem::path> runs_dir;
    bool live = false;  // allow non-deterministic specs
};

// Runs the scenario `repetitions` times on fresh environments and checks
// answer, status, event kinds and fault types. Deterministic repetitions
// must agree exactly. Throws ScenarioLoadError.
EvalRecord run_scenario(const ScenarioSpec& spec, int repetitions, const PromptLibrary& prompts,
                        const ScenarioOptions& options = {});

struct ReportSummary {
    std::size_t total = 0;
    std::size_t passed = 0;
    double pass_rate = 0;  // percent
};

ReportSummary summarize(const std::vector<EvalRecord>& records);

// Writes `out` (JSON) and a text table next to it (".txt"). Throws
// StorageError; requires at least one record.
ReportSummary report_summary(const std::vector<EvalRecord>& records, const std::filesystem::path& out);

// Population standard deviation.
double population_std_dev(const std::vector<double>& values);

}  // namespace agentflow
