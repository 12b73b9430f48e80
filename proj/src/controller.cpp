#include "agentflow/controller.hpp"

#include <algorithm>
#include <ctime>
#include <memory>
#include <random>
#include <set>

#include "agentflow/answer.hpp"
#include "agentflow/processors.hpp"

namespace agentflow {

namespace {

constexpr std::string_view kFixedDate = "2025-01-01";

std::string today_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
    return buf;
}

RetryPolicy effective_policy(RetryPolicy p, RunMode mode) {
    if (mode == RunMode::Deterministic) p.deterministic_mode = true;
    return p;
}

std::string checkpoint_name(int index) {
    std::string digits = std::to_string(index);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return "ckpt-" + digits + ".json";
}

void require_backend(const BackendPool& pool, const std::string& id, const std::string& where) {
    if (!pool.contains(id)) throw ConfigError(where + " references unknown backend '" + id + "'");
}

// References from the graph into the run's backends and tools.
void check_bindings(const RunContext& ctx, RunMode mode) {
    for (const auto& n : ctx.graph->nodes) {
        const std::string where = "node '" + n.id + "'";
        require_backend(*ctx.backends, n.backend, where);
        for (const auto* p : {&n.input_processor, &n.output_processor}) {
            if (p->enabled && !p->backend.empty()) require_backend(*ctx.backends, p->backend, where);
        }
        if (n.heavy_mode) {
            for (const auto& m : n.heavy_mode->members) {
                if (!m.backend.empty()) require_backend(*ctx.backends, m.backend, where);
            }
            if (!n.heavy_mode->verifier_backend.empty()) {
                require_backend(*ctx.backends, n.heavy_mode->verifier_backend, where);
            }
        }
        for (const auto& t : n.tools) {
            if (ctx.tools == nullptr || !ctx.tools->contains(t)) {
                throw ConfigError(where + " references unknown tool '" + t + "'");
            }
        }
    }
    if (mode == RunMode::Deterministic && !ctx.backends->all_scripted()) {
        throw ConfigError("deterministic mode requires every backend to be scripted");
    }
}

RunManifest base_manifest(const RunContext& ctx, const std::string& query, const RunConfig& config) {
    RunManifest m;
    m.graph_digest = graph_digest(*ctx.graph);
    m.prompt_hashes = ctx.prompts->hashes();
    m.backends_digest = ctx.backends->digest();
    m.environment_digest = ctx.environment_digest;
    m.seed = config.seed;
    m.mode = config.mode;
    m.query = query;
    return m;
}

const std::string& processor_backend(const AgentNodeSpec& node, const ProcessorSpec& p) {
    return p.backend.empty() ? node.backend : p.backend;
}

json answer_document(const StructuredAnswer& answer, AgentStatus status, const std::string& run_id) {
    return {{"run_id", run_id}, {"status", to_string(status)}, {"answer", to_json(answer)}};
}

// State shared by a fresh run and a resumed one.
struct Execution {
    const RunContext& ctx;
    const RunConfig& config;
    std::optional<RunStore> store;
    std::string run_id;
    std::unique_ptr<RunLog> log_owner;
    RunLog& log;
    std::unique_ptr<BudgetLedger> budget_owner;
    BudgetLedger& budget;
    RecordJournal journal;
    std::mt19937_64 rng;
    NormalizedTask normalized;
    std::string task;
    int checkpoint_count = 0;
    int written_here = 0;
    std::vector<Checkpoint> checkpoints;
    std::vector<AgentState*> frontier;
    std::deque<AgentState> resume_chain;

    Execution(const RunContext& c, const RunConfig& cfg, std::unique_ptr<RunLog> l, const BudgetRemaining* restored)
        : ctx(c),
          config(cfg),
          log_owner(std::move(l)),
          log(*log_owner),
          budget_owner(restored != nullptr ? std::make_unique<BudgetLedger>(c.graph->budgets, *restored)
                                           : std::make_unique<BudgetLedger>(c.graph->budgets)),
          budget(*budget_owner),
          rng(cfg.seed) {
        if (cfg.store) store.emplace(*cfg.store);
    }

    RuntimeEnv env() {
        RuntimeEnv e;
        e.graph = ctx.graph;
        e.backends = ctx.backends;
        e.tools = ctx.tools;
        e.prompts = ctx.prompts;
        e.log = &log;
        e.budget = &budget;
        e.journal = &journal;
        e.backend_retry = effective_policy(config.backend_retry, config.mode);
        e.tool_retry = effective_policy(config.tool_retry, config.mode);
        e.rng = &rng;
        e.delegation_depth_limit = config.delegation_depth_limit;
        e.ensemble_parallelism = config.ensemble_parallelism;
        e.deterministic = config.mode == RunMode::Deterministic;
        e.formatted_date = e.deterministic ? std::string(kFixedDate) : today_utc();
        e.answer_format = config.answer_format ? config.answer_format : normalized.format_tag;
        e.frontier = &frontier;
        e.resume_chain = &resume_chain;
        e.on_turn_complete = [this](const AgentState& s) {
            const bool due = config.checkpoint_frequency == CheckpointFrequency::EveryTurn ||
                             (config.checkpoint_frequency == CheckpointFrequency::EntryTurn && s.depth == 0 &&
                              s.node.id == ctx.graph->entry);
            if (due) write_checkpoint();
        };
        return e;
    }

    void write_checkpoint() {
        Checkpoint c;
        c.run_id = run_id;
        c.index = ++checkpoint_count;
        for (const auto* s : frontier) c.frontier.push_back(*s);
        c.budgets = budget.snapshot();
        c.task = task;
        c.normalized = normalized;
        c.components = {{"backends", ctx.backends->save_state()},
                        {"extra", ctx.save_extra ? ctx.save_extra() : json(nullptr)}};
        json frontier_json = json::array();
        for (const auto& s : c.frontier) frontier_json.push_back(to_json(s));
        log.emit(EventKind::Checkpoint, ctx.graph->entry,
                 {{"index", c.index},
                  {"frontier_digest", sha256_hex(frontier_json.dump())},
                  {"live_agents", c.frontier.size()}});
        c.log_high_water_mark = log.high_water_mark();
        if (store) checkpoint_write(c, *store);
        checkpoints.push_back(c);
        ++written_here;
        if (config.halt_after_checkpoints && written_here >= *config.halt_after_checkpoints) {
            throw RunInterrupted(c.index);
        }
    }

    // Runs the entry agent to completion and assembles the answer.
    RunResult finish(AgentState& entry_state, RuntimeEnv& env) {
        run_agent(entry_state, env);
        const AgentNodeSpec& entry = ctx.graph->node(ctx.graph->entry);
        NormalizedTask answer_task = normalized;
        if (config.answer_format) answer_task.format_tag = config.answer_format;

        StructuredAnswer answer;
        if (entry.output_processor.enabled && !entry_state.transcript.empty() &&
            entry_state.status != AgentStatus::BudgetStop) {
            BackendHandle h{&ctx.backends->get(processor_backend(entry, entry.output_processor)), env.backend_retry,
                            &log, entry.id, "synthesize", estimate_tokens};
            answer = synthesize_output(entry_state.transcript, answer_task, h, *ctx.prompts);
        } else {
            answer = direct_answer(entry_state.transcript, answer_task);
        }
        if (entry_state.status == AgentStatus::TurnLimit) {
            answer.warnings.push_back("entry agent reached its turn limit of " + std::to_string(entry.max_turns));
        }

        RunResult result;
        result.run_id = run_id;
        result.status = entry_state.status;
        result.task = normalized;
        if (budget.wall_clock_exceeded()) {
            answer.warnings.push_back("wall-clock budget exhausted");
            result.status = AgentStatus::BudgetStop;
        }
        result.answer = answer;
        if (store) write_file_atomic(store->answer_path(run_id), answer_document(answer, result.status, run_id).dump(2));
        result.transcript = journal.entries();
        result.events = log.entries();
        result.checkpoints = checkpoints;
        if (result.status == AgentStatus::BudgetStop && budget.wall_clock_exceeded()) {
            throw WallClockExceeded(answer, run_id);
        }
        return result;
    }
};

}  // namespace

std::string_view to_string(RunMode m) { return m == RunMode::Live ? "live" : "deterministic"; }

json to_json(const RunManifest& m) {
    return {{"run_id", m.run_id},
            {"graph_digest", m.graph_digest},
            {"prompt_hashes", m.prompt_hashes},
            {"backends_digest", m.backends_digest},
            {"environment_digest", m.environment_digest},
            {"seed", m.seed},
            {"started_at", m.started_at},
            {"mode", to_string(m.mode)},
            {"query", m.query}};
}

RunManifest run_manifest_from_json(const json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.graph_digest = j.at("graph_digest").get<std::string>();
    m.prompt_hashes = j.at("prompt_hashes").get<std::map<std::string, std::string>>();
    m.backends_digest = j.at("backends_digest").get<std::string>();
    m.environment_digest = j.value("environment_digest", "");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started_at = j.at("started_at").get<std::string>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "live" && mode != "deterministic") throw SchemaError("unknown run mode '" + mode + "'");
    m.mode = mode == "live" ? RunMode::Live : RunMode::Deterministic;
    m.query = j.at("query").get<std::string>();
    return m;
}

json to_json(const Checkpoint& c) {
    json frontier = json::array();
    for (const auto& s : c.frontier) frontier.push_back(to_json(s));
    return {{"run_id", c.run_id},
            {"index", c.index},
            {"frontier", frontier},
            {"budgets", to_json(c.budgets)},
            {"log_high_water_mark", c.log_high_water_mark},
            {"task", c.task},
            {"normalized", to_json(c.normalized)},
            {"components", c.components}};
}

Checkpoint checkpoint_from_json(const json& j, const AgentGraphSpec& graph) {
    Checkpoint c;
    c.run_id = j.at("run_id").get<std::string>();
    c.index = j.at("index").get<int>();
    for (const auto& s : j.at("frontier")) c.frontier.push_back(agent_state_from_json(s, graph));
    c.budgets = budget_remaining_from_json(j.at("budgets"));
    c.log_high_water_mark = j.at("log_high_water_mark").get<std::uint64_t>();
    c.task = j.at("task").get<std::string>();
    c.normalized = normalized_task_from_json(j.at("normalized"));
    c.components = j.at("components");
    return c;
}

RunStore::RunStore(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path RunStore::run_dir(const std::string& run_id) const { return root_ / run_id; }
std::filesystem::path RunStore::manifest_path(const std::string& run_id) const {
    return run_dir(run_id) / "manifest.json";
}
std::filesystem::path RunStore::events_path(const std::string& run_id) const {
    return run_dir(run_id) / "events.jsonl";
}
std::filesystem::path RunStore::checkpoints_dir(const std::string& run_id) const {
    return run_dir(run_id) / "checkpoints";
}
std::filesystem::path RunStore::checkpoint_path(const std::string& run_id, int index) const {
    return checkpoints_dir(run_id) / checkpoint_name(index);
}
std::filesystem::path RunStore::answer_path(const std::string& run_id) const { return run_dir(run_id) / "answer.json"; }

bool RunStore::exists(const std::string& run_id) const { return std::filesystem::exists(manifest_path(run_id)); }

std::vector<int> RunStore::checkpoints(const std::string& run_id) const {
    std::vector<int> out;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(checkpoints_dir(run_id), ec)) {
        const auto name = e.path().filename().string();
        if (name.size() == 14 && name.rfind("ckpt-", 0) == 0 && name.substr(9) == ".json") {
            try {
                out.push_back(std::stoi(name.substr(5, 4)));
            } catch (const std::exception&) {
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

InvalidGraph::InvalidGraph(ValidationReport report)
    : Error([&] {
          std::string msg = "invalid graph:";
          for (const auto& v : report) msg += "\n  " + describe(v);
          return msg;
      }()),
      report_(std::move(report)) {}

std::string make_run_id(const RunManifest& base, const std::optional<RunStore>& store) {
    std::string stem;
    if (base.mode == RunMode::Deterministic) {
        json key = to_json(base);
        key.erase("run_id");
        key.erase("started_at");
        stem = "run-" + sha256_hex(key.dump()).substr(0, 12);
    } else {
        std::random_device rd;
        stem = "run-" + sha256_hex(utc_timestamp_now() + std::to_string(rd())).substr(0, 12);
    }
    for (int n = 1;; ++n) {
        const std::string id = stem + "-" + std::to_string(n);
        if (!store || !std::filesystem::exists(store->run_dir(id))) return id;
    }
}

std::filesystem::path checkpoint_write(const Checkpoint& c, const RunStore& store) {
    const auto path = store.checkpoint_path(c.run_id, c.index);
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw StorageError("cannot create checkpoint directory '" + path.parent_path().string() + "': " + ec.message());
    write_file_atomic(path, to_json(c).dump(2));
    return path;
}

Checkpoint checkpoint_read(const std::string& run_id, int index, const RunStore& store, const AgentGraphSpec& graph) {
    const auto path = store.checkpoint_path(run_id, index);
    if (!std::filesystem::exists(path)) throw StorageError("checkpoint not found: '" + path.string() + "'");
    return checkpoint_from_json(parse_json_document(read_file(path)), graph);
}

RunManifest read_manifest(const std::string& run_id, const RunStore& store) {
    const auto path = store.manifest_path(run_id);
    if (!std::filesystem::exists(path)) throw StorageError("no run '" + run_id + "' under '" + store.root().string() + "'");
    return run_manifest_from_json(parse_json_document(read_file(path)));
}

std::optional<StructuredAnswer> read_recorded_answer(const std::string& run_id, const RunStore& store) {
    const auto path = store.answer_path(run_id);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return structured_answer_from_json(parse_json_document(read_file(path)).at("answer"));
}

RunResult execute_task(const RunContext& ctx, const std::string& query, const RunConfig& config) {
    if (ctx.graph == nullptr || ctx.backends == nullptr || ctx.prompts == nullptr) {
        throw ConfigError("run context is incomplete");
    }
    const bool zero_clock = ctx.graph->budgets.wall_clock_limit == 0.0;
    if (!zero_clock) {
        auto report = validate_graph(*ctx.graph);
        if (!report.empty()) throw InvalidGraph(std::move(report));
    }
    check_bindings(ctx, config.mode);

    RunManifest manifest = base_manifest(ctx, query, config);
    std::optional<RunStore> store;
    if (config.store) store.emplace(*config.store);
    manifest.run_id = config.run_id ? *config.run_id : make_run_id(manifest, store);
    manifest.started_at = utc_timestamp_now();

    auto log = std::make_unique<RunLog>();
    if (store) {
        if (store->exists(manifest.run_id)) throw StorageError("run '" + manifest.run_id + "' already exists");
        std::error_code ec;
        std::filesystem::create_directories(store->run_dir(manifest.run_id), ec);
        if (ec) throw StorageError("cannot create run directory '" + store->run_dir(manifest.run_id).string() + "'");
        write_file_atomic(store->manifest_path(manifest.run_id), to_json(manifest).dump(2));
        log = std::make_unique<RunLog>(store->events_path(manifest.run_id));
    }

    Execution exec(ctx, config, std::move(log), nullptr);
    exec.run_id = manifest.run_id;
    const AgentNodeSpec& entry = ctx.graph->node(ctx.graph->entry);

    if (zero_clock) {
        exec.budget.wall_clock_exceeded(exec.log, entry.id);
        StructuredAnswer partial;
        partial.warnings.push_back("wall-clock budget exhausted before any turn");
        partial.format_tag = config.answer_format;
        if (store) {
            write_file_atomic(store->answer_path(exec.run_id),
                              answer_document(partial, AgentStatus::BudgetStop, exec.run_id).dump(2));
        }
        throw WallClockExceeded(partial, exec.run_id);
    }

    RuntimeEnv env = exec.env();
    if (entry.input_processor.enabled) {
        BackendHandle h{&ctx.backends->get(processor_backend(entry, entry.input_processor)), env.backend_retry,
                        &exec.log, entry.id, "normalize", estimate_tokens};
        exec.normalized = augment_query(query, h, *ctx.prompts);
        exec.task = render_task(exec.normalized);
    } else {
        if (trim(query).empty()) throw EmptyQueryError();
        exec.normalized = identity_task(query);
        exec.task = query;
    }
    env = exec.env();

    AgentState entry_state = fresh_state(entry, exec.task, 0);
    return exec.finish(entry_state, env);
}

RunResult resume_from_checkpoint(const std::string& run_id, std::optional<int> index, const RunStore& store,
                                 const RunContext& ctx, const RunConfig& config) {
    const RunManifest recorded = read_manifest(run_id, store);
    const RunManifest current = base_manifest(ctx, recorded.query, config);
    if (current.graph_digest != recorded.graph_digest) throw ManifestMismatch("graph digest");
    if (current.prompt_hashes != recorded.prompt_hashes) throw ManifestMismatch("prompt hashes");
    if (current.backends_digest != recorded.backends_digest) throw ManifestMismatch("backend profiles digest");
    if (current.environment_digest != recorded.environment_digest) throw ManifestMismatch("environment digest");

    if (std::filesystem::exists(store.answer_path(run_id))) {
        const json doc = parse_json_document(read_file(store.answer_path(run_id)));
        RunResult result;
        result.run_id = run_id;
        result.answer = structured_answer_from_json(doc.at("answer"));
        result.status = agent_status_from_string(doc.at("status").get<std::string>());
        result.events = read_event_log(store.events_path(run_id));
        result.transcript = replay_events(result.events);
        result.resumed = true;
        return result;
    }

    const auto available = store.checkpoints(run_id);
    if (available.empty()) throw StorageError("run '" + run_id + "' has no checkpoint to resume from");
    const int chosen = index ? *index : available.back();
    Checkpoint c = checkpoint_read(run_id, chosen, store, *ctx.graph);
    if (c.frontier.empty()) throw StorageError("checkpoint " + std::to_string(chosen) + " has an empty frontier");

    RunConfig cfg = config;
    cfg.store = store.root();
    cfg.mode = recorded.mode;
    cfg.seed = recorded.seed;
    Execution exec(ctx, cfg, std::make_unique<RunLog>(RunLog::resume(store.events_path(run_id), c.log_high_water_mark)),
                   &c.budgets);
    exec.run_id = run_id;
    exec.checkpoint_count = c.index;
    exec.normalized = c.normalized;
    exec.task = c.task;
    ctx.backends->restore_state(c.components.at("backends"));
    if (ctx.restore_extra) ctx.restore_extra(c.components.value("extra", json(nullptr)));
    exec.journal.append_all(replay_events(exec.log.entries()));

    AgentState entry_state = std::move(c.frontier.front());
    for (std::size_t i = 1; i < c.frontier.size(); ++i) exec.resume_chain.push_back(std::move(c.frontier[i]));
    RuntimeEnv env = exec.env();
    auto result = exec.finish(entry_state, env);
    result.resumed = true;
    return result;
}

std::vector<TurnRecord> replay_events(const std::vector<EventLogEntry>& entries) {
    std::vector<TurnRecord> out;
    for (const auto& e : entries) {
        if (e.kind != EventKind::Turn || e.payload.value("phase", "") != "record") continue;
        TurnRecord r = turn_record_from_json(e.payload.at("record"));
        if (!e.timing.is_null()) apply_turn_timing(r, e.timing);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TurnRecord> replay_run(const std::string& run_id, const RunStore& store) {
    const auto path = store.events_path(run_id);
    if (!std::filesystem::exists(path)) throw StorageError("no event log for run '" + run_id + "'");
    return replay_events(read_event_log(path));
}

}  // namespace agentflow
