#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agentflow/runtime.hpp"

namespace agentflow {

enum class RunMode { Live, Deterministic };

std::string_view to_string(RunMode m);

struct RunManifest {
    std::string run_id;
    std::string graph_digest;
    std::map<std::string, std::string> prompt_hashes;
    std::string backends_digest;
    // Digest of run-specific configuration outside the graph and backends
    // (tool manifests, armed fault injections).
    std::string environment_digest;
    std::uint64_t seed = 0;
    std::string started_at;
    RunMode mode = RunMode::Deterministic;
    std::string query;

    bool operator==(const RunManifest&) const = default;
};

json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const json& j);

struct Checkpoint {
    std::string run_id;
    int index = 0;  // 1-based, in write order
    std::vector<AgentState> frontier;  // live agents, entry first
    BudgetRemaining budgets;
    std::uint64_t log_high_water_mark = 0;  // includes this checkpoint's event
    std::string task;                        // entry task after normalization
    NormalizedTask normalized;
    json components = json::object();  // saved backend and injector states

    bool operator==(const Checkpoint&) const = default;
};

json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const json& j, const AgentGraphSpec& graph);

// Layout of runs/<run_id>/ under a root directory.
class RunStore {
public:
    explicit RunStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path run_dir(const std::string& run_id) const;
    std::filesystem::path manifest_path(const std::string& run_id) const;
    std::filesystem::path events_path(const std::string& run_id) const;
    std::filesystem::path checkpoints_dir(const std::string& run_id) const;
    std::filesystem::path checkpoint_path(const std::string& run_id, int index) const;
    std::filesystem::path answer_path(const std::string& run_id) const;

    bool exists(const std::string& run_id) const;
    // Checkpoint indices present for the run, ascending.
    std::vector<int> checkpoints(const std::string& run_id) const;

private:
    std::filesystem::path root_;
};

class InvalidGraph : public Error {
public:
    explicit InvalidGraph(ValidationReport report);
    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

class WallClockExceeded : public Error {
public:
    WallClockExceeded(StructuredAnswer partial, std::string run_id)
        : Error("wall-clock budget exhausted"), partial_(std::move(partial)), run_id_(std::move(run_id)) {}
    const StructuredAnswer& partial() const noexcept { return partial_; }
    const std::string& run_id() const noexcept { return run_id_; }

private:
    StructuredAnswer partial_;
    std::string run_id_;
};

class ManifestMismatch : public Error {
public:
    explicit ManifestMismatch(const std::string& field)
        : Error("run manifest mismatch: " + field + " differs from the recorded run"), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Thrown by the halt_after_checkpoints test hook.
class RunInterrupted : public Error {
public:
    explicit RunInterrupted(int checkpoint) : Error("run interrupted after checkpoint " + std::to_string(checkpoint)) {}
};

enum class CheckpointFrequency { EntryTurn, EveryTurn, Never };

// Components a run executes against. The hooks carry state that lives
// outside the backend pool (fault injectors) into checkpoints.
struct RunContext {
    const AgentGraphSpec* graph = nullptr;
    BackendPool* backends = nullptr;
    const ToolRegistry* tools = nullptr;
    const PromptLibrary* prompts = nullptr;
    std::string environment_digest;
    std::function<json()> save_extra;
    std::function<void(const json&)> restore_extra;
};

struct RunConfig {
    RunMode mode = RunMode::Deterministic;
    std::uint64_t seed = 0;
    RetryPolicy backend_retry;
    RetryPolicy tool_retry;
    int delegation_depth_limit = 3;
    int ensemble_parallelism = 4;
    std::optional<AnswerFormat> answer_format;
    CheckpointFrequency checkpoint_frequency = CheckpointFrequency::EntryTurn;
    // Persist manifest, log, checkpoints and answer under this root; memory
    // only when unset.
    std::optional<std::filesystem::path> store;
    std::optional<std::string> run_id;
    std::optional<int> halt_after_checkpoints;
};

struct RunResult {
    std::string run_id;
    StructuredAnswer answer;
    AgentStatus status = AgentStatus::Finished;  // entry node's terminal status
    NormalizedTask task;
    std::vector<TurnRecord> transcript;  // every node, completion order
    std::vector<EventLogEntry> events;
    std::vector<Checkpoint> checkpoints;  // written during this invocation
    bool resumed = false;
};

// Deterministic run ids are derived from the manifest digests and query;
// a counter suffix keeps them unique within a store.
std::string make_run_id(const RunManifest& base, const std::optional<RunStore>& store);

// augment_query (when the entry's input processor is enabled), run_agent on
// the entry node, then synthesize_output or direct_answer. Throws
// InvalidGraph, ConfigError, WallClockExceeded and RunInterrupted.
RunResult execute_task(const RunContext& ctx, const std::string& query, const RunConfig& config = {});

// Atomic write of checkpoint `c` under the store. Throws StorageError.
std::filesystem::path checkpoint_write(const Checkpoint& c, const RunStore& store);
Checkpoint checkpoint_read(const std::string& run_id, int index, const RunStore& store, const AgentGraphSpec& graph);

// Continues a recorded run from checkpoint `index` (the latest when unset).
// A finished run returns its recorded answer and appends nothing. Throws
// ManifestMismatch when the graph, prompts, backends or environment differ.
RunResult resume_from_checkpoint(const std::string& run_id, std::optional<int> index, const RunStore& store,
                                 const RunContext& ctx, const RunConfig& config = {});

// Transcript rebuilt from the event log alone. Throws LogCorrupt.
std::vector<TurnRecord> replay_run(const std::string& run_id, const RunStore& store);
std::vector<TurnRecord> replay_events(const std::vector<EventLogEntry>& entries);

RunManifest read_manifest(const std::string& run_id, const RunStore& store);
std::optional<StructuredAnswer> read_recorded_answer(const std::string& run_id, const RunStore& store);

}  // namespace agentflow
