#include "agentflow/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "agentflow/answer.hpp"

namespace agentflow {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kScenarioKeys{"name",   "graph",  "backends",        "tools",    "corpus",
                                          "sandbox", "query", "format",          "injected_faults",
                                          "expected", "deterministic", "judge_backend", "comment"};

std::string default_detail(FailureClass cls) {
    switch (cls) {
        case FailureClass::TransientNetwork:
            return "Max retries exceeded: Failed to resolve host ([Errno -2] Name or service not known)";
        case FailureClass::RateLimit: return "429 Too Many Requests";
        case FailureClass::Timeout: return "Read timed out";
        case FailureClass::MalformedResponse: return "unexpected response format";
        case FailureClass::Permanent: return "Target URL returned error 403: Forbidden";
    }
    return "injected failure";
}

std::string failure_detail(const FaultInjection& f) {
    return f.detail.empty() ? default_detail(*f.fault_class) : f.detail;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

fs::path existing(const fs::path& base, const json& j, const std::string& key) {
    if (!j.at(key).is_string()) throw ScenarioLoadError("scenario field '" + key + "' must be a path string");
    auto p = resolve(base, j.at(key).get<std::string>());
    if (!fs::exists(p)) throw ScenarioLoadError("scenario " + key + " '" + p.string() + "' does not exist");
    return p;
}

std::string tree_digest(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string material;
    for (const auto& f : files) {
        material += fs::relative(f, dir).generic_string() + "\n" + sha256_hex(read_file(f)) + "\n";
    }
    return sha256_hex(material);
}

class InjectingBackend final : public ChatBackend {
public:
    InjectingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ScenarioEnvironment::InjectorState> state)
        : inner_(std::move(inner)), state_(std::move(state)) {}

    const BackendProfile& profile() const override { return inner_->profile(); }

    ChatResponse complete(const ChatRequest& request) override {
        const int ordinal = ++state_->invocations;
        const std::string_view subject =
            request.messages.empty() ? std::string_view{} : std::string_view(request.messages.back().content);
        const auto& f = state_->injection;
        if (injection_fires(f, ordinal, subject, state_->fired.load())) {
            ++state_->fired;
            if (f.malformed_payload) {
                ChatResponse r;
                r.message = {Role::Assistant, *f.malformed_payload, 0, {}, {}};
                return r;
            }
            throw BackendFailure(*f.fault_class, failure_detail(f));
        }
        return inner_->complete(request);
    }

    json save_state() const override { return inner_->save_state(); }
    void restore_state(const json& s) override { inner_->restore_state(s); }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<ScenarioEnvironment::InjectorState> state_;
};

std::string status_of(const RunResult& r) { return std::string(to_string(r.status)); }

std::optional<double> std_dev_of(const std::vector<Repetition>& reps) {
    if (reps.empty()) return std::nullopt;
    std::vector<double> scores;
    for (const auto& r : reps) scores.push_back(r.verdict == MatchVerdict::Mismatch ? 0.0 : 100.0);
    return population_std_dev(scores);
}

}  // namespace

FaultInjection fault_injection_from_json(const json& j) {
    if (!j.is_object()) throw ScenarioLoadError("fault injection must be an object");
    for (const auto& [k, v] : j.items()) {
        static const std::set<std::string> keys{"target", "trigger", "fault", "detail", "repeat", "comment"};
        if (!keys.count(k)) throw ScenarioLoadError("unknown fault injection field '" + k + "'");
    }
    FaultInjection f;
    if (!j.contains("target") || !j["target"].is_string() || j["target"].get<std::string>().empty()) {
        throw ScenarioLoadError("fault injection needs a target");
    }
    f.target = j["target"].get<std::string>();

    const json trigger = j.value("trigger", json{{"ordinal", 1}});
    if (!trigger.is_object() || trigger.size() != 1 || !(trigger.contains("ordinal") || trigger.contains("match"))) {
        throw ScenarioLoadError("trigger must be {\"ordinal\": n} or {\"match\": text}");
    }
    if (trigger.contains("ordinal")) {
        if (!trigger["ordinal"].is_number_integer() || trigger["ordinal"].get<int>() < 1) {
            throw ScenarioLoadError("trigger ordinal must be an integer >= 1");
        }
        f.trigger.ordinal = trigger["ordinal"].get<int>();
    } else {
        if (!trigger["match"].is_string() || trigger["match"].get<std::string>().empty()) {
            throw ScenarioLoadError("trigger match must be a non-empty string");
        }
        f.trigger.match = trigger["match"].get<std::string>();
    }

    if (!j.contains("fault")) throw ScenarioLoadError("fault injection needs a fault");
    const auto& fault = j["fault"];
    if (fault.is_string()) {
        auto cls = failure_class_from_string(fault.get<std::string>());
        if (!cls) throw ScenarioLoadError("unknown failure class '" + fault.get<std::string>() + "'");
        f.fault_class = *cls;
    } else if (fault.is_object() && fault.size() == 1 && fault.contains("malformed_payload") &&
               fault["malformed_payload"].is_string()) {
        f.malformed_payload = fault["malformed_payload"].get<std::string>();
    } else {
        throw ScenarioLoadError("fault must be a failure class or {\"malformed_payload\": text}");
    }
    f.detail = j.value("detail", "");

    if (j.contains("repeat")) {
        const auto& r = j["repeat"];
        if (r.is_string() && r.get<std::string>() == "persistent") {
            f.persistent = true;
        } else if (r.is_number_integer() && r.get<int>() >= 1) {
            f.repeat = r.get<int>();
        } else {
            throw ScenarioLoadError("repeat must be an integer >= 1 or \"persistent\"");
        }
    }
    return f;
}

json to_json(const FaultInjection& f) {
    json j{{"target", f.target}};
    j["trigger"] = f.trigger.ordinal ? json{{"ordinal", *f.trigger.ordinal}} : json{{"match", *f.trigger.match}};
    j["fault"] = f.fault_class ? json(to_string(*f.fault_class)) : json{{"malformed_payload", *f.malformed_payload}};
    if (!f.detail.empty()) j["detail"] = f.detail;
    j["repeat"] = f.persistent ? json("persistent") : json(f.repeat);
    return j;
}

bool injection_fires(const FaultInjection& f, int ordinal, std::string_view subject, int fired) {
    const bool eligible = f.trigger.ordinal ? ordinal >= *f.trigger.ordinal
                                            : subject.find(*f.trigger.match) != std::string_view::npos;
    if (!eligible) return false;
    return f.persistent || fired < f.repeat;
}

ScenarioSpec parse_scenario(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ScenarioLoadError("scenario must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!kScenarioKeys.count(k)) throw ScenarioLoadError("unknown scenario field '" + k + "'");
    }
    for (const char* key : {"name", "graph", "backends", "query"}) {
        if (!j.contains(key)) throw ScenarioLoadError(std::string("scenario is missing '") + key + "'");
    }
    ScenarioSpec s;
    s.name = j.at("name").get<std::string>();
    s.graph = existing(base_dir, j, "graph");
    s.backends = existing(base_dir, j, "backends");
    if (j.contains("tools")) s.tools = existing(base_dir, j, "tools");
    if (j.contains("corpus")) s.corpus = existing(base_dir, j, "corpus");
    if (j.contains("sandbox")) s.sandbox = existing(base_dir, j, "sandbox");
    s.query = j.at("query").get<std::string>();
    if (j.contains("format")) {
        s.format = answer_format_from_string(j["format"].get<std::string>());
        if (!s.format) throw ScenarioLoadError("unknown answer format '" + j["format"].get<std::string>() + "'");
    }
    if (j.contains("injected_faults")) {
        if (!j["injected_faults"].is_array()) throw ScenarioLoadError("injected_faults must be a list");
        for (const auto& f : j["injected_faults"]) s.injected_faults.push_back(fault_injection_from_json(f));
    }
    s.deterministic = j.value("deterministic", true);
    if (j.contains("judge_backend")) s.judge_backend = j["judge_backend"].get<std::string>();

    const json expected = j.value("expected", json::object());
    if (!expected.is_object()) throw ScenarioLoadError("expected must be an object");
    if (expected.contains("answer")) {
        const auto answer = expected["answer"].get<std::string>();
        if (canonicalize_answer(answer, s.format) != answer) {
            throw ScenarioLoadError("expected answer '" + answer + "' is not in canonical form ('" +
                                    canonicalize_answer(answer, s.format) + "')");
        }
        s.expected.answer = answer;
    }
    s.expected.status = expected.value("status", "finished");
    agent_status_from_string(s.expected.status);
    for (const char* key : {"event_kinds", "event_kinds_min"}) {
        if (!expected.contains(key)) continue;
        auto& target = std::string(key) == "event_kinds" ? s.expected.event_kinds : s.expected.event_kinds_min;
        for (const auto& [kind, count] : expected[key].items()) {
            if (!event_kind_from_string(kind)) throw ScenarioLoadError("unknown event kind '" + kind + "'");
            target[kind] = count.get<int>();
        }
    }
    if (expected.contains("fault_types")) {
        for (const auto& t : expected["fault_types"]) {
            const auto name = t.get<std::string>();
            try {
                fault_type_from_string(name);
            } catch (const Error&) {
                throw ScenarioLoadError("unknown fault type '" + name + "'");
            }
            s.expected.fault_types.push_back(name);
        }
    }
    return s;
}

ScenarioSpec load_scenario(const fs::path& path) {
    json j;
    try {
        j = parse_json_document(read_file(path));
    } catch (const Error& e) {
        throw ScenarioLoadError("cannot load scenario '" + path.string() + "': " + e.what());
    }
    return parse_scenario(j, path.parent_path());
}

RunContext ScenarioEnvironment::context() {
    RunContext ctx;
    ctx.graph = &graph;
    ctx.backends = &backends;
    ctx.tools = &tools;
    ctx.prompts = &prompts;
    ctx.environment_digest = digest;
    ctx.save_extra = [this] { return save_injectors(); };
    ctx.restore_extra = [this](const json& s) { restore_injectors(s); };
    return ctx;
}

json ScenarioEnvironment::save_injectors() const {
    json out = json::array();
    for (const auto& i : injectors) out.push_back({{"invocations", i->invocations.load()}, {"fired", i->fired.load()}});
    return out;
}

void ScenarioEnvironment::restore_injectors(const json& state) {
    if (state.is_null()) return;
    if (!state.is_array() || state.size() != injectors.size()) {
        throw SchemaError("injector state does not match the armed injections");
    }
    for (std::size_t k = 0; k < injectors.size(); ++k) {
        injectors[k]->invocations = state[k].at("invocations").get<int>();
        injectors[k]->fired = state[k].at("fired").get<int>();
    }
}

void inject_fault(ScenarioEnvironment& env, const FaultInjection& injection) {
    auto state = std::make_shared<ScenarioEnvironment::InjectorState>();
    state->injection = injection;
    if (env.tools.contains(injection.target)) {
        ToolImpl original = env.tools.impl(injection.target);
        env.tools.replace_impl(injection.target, [original, state](const json& arguments) -> std::string {
            const int ordinal = ++state->invocations;
            const auto& f = state->injection;
            if (injection_fires(f, ordinal, arguments.dump(), state->fired.load())) {
                ++state->fired;
                if (f.malformed_payload) return *f.malformed_payload;
                throw ToolFailure(*f.fault_class, failure_detail(f));
            }
            return original(arguments);
        });
    } else if (env.backends.contains(injection.target)) {
        env.backends.replace(injection.target,
                             std::make_shared<InjectingBackend>(env.backends.shared(injection.target), state));
    } else {
        throw UnknownTarget(injection.target);
    }
    env.injectors.push_back(std::move(state));
}

std::unique_ptr<ScenarioEnvironment> build_environment(const ScenarioSpec& spec, const PromptLibrary& prompts) {
    auto env = std::make_unique<ScenarioEnvironment>();
    json material = json::object();
    try {
        env->graph = load_graph_spec(spec.graph);
        for (const auto& profile : load_backend_profiles(spec.backends)) env->backends.add(make_backend(profile));
        BuiltinToolOptions options;
        if (spec.corpus) {
            options.corpus = std::make_shared<SearchCorpus>(SearchCorpus::load(*spec.corpus));
            material["corpus"] = sha256_hex(read_file(*spec.corpus));
        }
        if (spec.sandbox) {
            options.sandbox_dir = *spec.sandbox;
            material["sandbox"] = tree_digest(*spec.sandbox);
        }
        if (spec.tools) {
            load_tool_manifest(*spec.tools, env->tools, options);
            material["tools"] = sha256_hex(read_file(*spec.tools));
        } else {
            register_builtin_stubs(env->tools, options);
        }
    } catch (const Error& e) {
        throw ScenarioLoadError("scenario '" + spec.name + "': " + e.what());
    }
    env->prompts = prompts;
    json injections = json::array();
    for (const auto& f : spec.injected_faults) {
        inject_fault(*env, f);
        injections.push_back(to_json(f));
    }
    material["injections"] = injections;
    env->digest = sha256_hex(material.dump());
    return env;
}

std::string_view to_string(MatchVerdict v) {
    switch (v) {
        case MatchVerdict::Exact: return "exact";
        case MatchVerdict::JudgeAccepted: return "judge-accepted";
        case MatchVerdict::Mismatch: return "mismatch";
    }
    return "mismatch";
}

MatchVerdict match_verdict_from_string(std::string_view s) {
    for (auto v : {MatchVerdict::Exact, MatchVerdict::JudgeAccepted, MatchVerdict::Mismatch}) {
        if (to_string(v) == s) return v;
    }
    throw SchemaError("unknown match verdict '" + std::string(s) + "'");
}

AnswerEvaluation evaluate_answer(std::string_view produced, std::string_view expected, const BackendHandle* judge,
                                 const PromptLibrary* prompts, std::optional<AnswerFormat> format,
                                 std::string_view question) {
    AnswerEvaluation out;
    if (canonicalize_answer(produced, format) == canonicalize_answer(expected, format)) {
        out.verdict = MatchVerdict::Exact;
        return out;
    }
    if (judge == nullptr || prompts == nullptr) return out;
    try {
        ChatRequest request;
        request.temperature = 0.0;
        request.messages.push_back({Role::System, prompts->get("judge.txt"), 0, {}, {}});
        std::string user;
        if (!question.empty()) user += "Question:\n" + std::string(question) + "\n\n";
        user += "Reference answer:\n" + std::string(expected) + "\n\nCandidate answer:\n" + std::string(produced);
        request.messages.push_back({Role::User, user, 1, {}, {}});
        const auto reply = call_backend(*judge, request).message.content;
        const auto trimmed = trim(reply);
        const std::string first = trim(std::string_view(trimmed).substr(0, trimmed.find('\n')));
        if (first == "ACCEPT") {
            out.verdict = MatchVerdict::JudgeAccepted;
        } else if (first != "REJECT") {
            out.warnings.push_back("judge reply unparseable: " + truncate_text(trimmed, 200));
        }
    } catch (const Error& e) {
        out.warnings.push_back(std::string("judge unavailable: ") + e.what());
    }
    return out;
}

json to_json(const EvalRecord& r) {
    json reps = json::array();
    for (const auto& p : r.repetitions) {
        reps.push_back({{"run_id", p.run_id},
                        {"answer", p.answer},
                        {"status", p.status},
                        {"match", to_string(p.verdict)},
                        {"log_digest", p.log_digest},
                        {"wall_seconds", p.wall_seconds}});
    }
    return {{"scenario", r.scenario},
            {"run_id", r.run_id},
            {"produced", r.produced},
            {"expected", r.expected},
            {"match", to_string(r.match)},
            {"status", r.status},
            {"repetitions", reps},
            {"std_dev", r.std_dev ? json(*r.std_dev) : json(nullptr)},
            {"failures", r.failures},
            {"warnings", r.warnings},
            {"passed", r.passed}};
}

EvalRecord eval_record_from_json(const json& j) {
    EvalRecord r;
    r.scenario = j.at("scenario").get<std::string>();
    r.run_id = j.value("run_id", "");
    r.produced = j.value("produced", "");
    r.expected = j.value("expected", "");
    r.match = match_verdict_from_string(j.at("match").get<std::string>());
    r.status = j.value("status", "");
    for (const auto& p : j.value("repetitions", json::array())) {
        r.repetitions.push_back({p.value("run_id", ""), p.value("answer", ""), p.value("status", ""),
                                 match_verdict_from_string(p.value("match", "mismatch")), p.value("log_digest", ""),
                                 p.value("wall_seconds", 0.0)});
    }
    if (j.contains("std_dev") && !j["std_dev"].is_null()) r.std_dev = j["std_dev"].get<double>();
    r.failures = j.value("failures", std::vector<std::string>{});
    r.warnings = j.value("warnings", std::vector<std::string>{});
    r.passed = j.at("passed").get<bool>();
    return r;
}

EvalRecord run_scenario(const ScenarioSpec& spec, int repetitions, const PromptLibrary& prompts,
                        const ScenarioOptions& options) {
    if (repetitions < 1) throw ScenarioLoadError("repetitions must be positive");
    if (!spec.deterministic && !options.live) {
        throw ScenarioLoadError("scenario '" + spec.name + "' is live; enable live mode to run it");
    }
    EvalRecord record;
    record.scenario = spec.name;
    record.expected = spec.expected.answer.value_or("");

    for (int rep = 0; rep < repetitions; ++rep) {
        auto env = build_environment(spec, prompts);
        RunConfig config;
        config.mode = spec.deterministic ? RunMode::Deterministic : RunMode::Live;
        config.answer_format = spec.format;
        config.store = options.runs_dir;

        const auto started = std::chrono::steady_clock::now();
        Repetition r;
        StructuredAnswer answer;
        std::vector<EventLogEntry> events;
        try {
            const auto result = execute_task(env->context(), spec.query, config);
            answer = result.answer;
            events = result.events;
            r.run_id = result.run_id;
            r.status = status_of(result);
        } catch (const WallClockExceeded& e) {
            answer = e.partial();
            r.run_id = e.run_id();
            r.status = "budget-stop";
            if (options.runs_dir) events = read_event_log(RunStore(*options.runs_dir).events_path(e.run_id()));
        } catch (const InvalidGraph& e) {
            throw ScenarioLoadError("scenario '" + spec.name + "': " + e.what());
        } catch (const ConfigError& e) {
            throw ScenarioLoadError("scenario '" + spec.name + "': " + e.what());
        } catch (const std::exception& e) {
            r.status = "error";
            record.failures.push_back("repetition " + std::to_string(rep + 1) + " crashed: " + e.what());
        }
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        r.answer = answer.final_answer;
        r.log_digest = event_log_digest(events);

        std::optional<BackendHandle> judge;
        if (spec.judge_backend && env->backends.contains(*spec.judge_backend)) {
            judge = BackendHandle{&env->backends.get(*spec.judge_backend), RetryPolicy{}, nullptr, "judge", "judge",
                                  estimate_tokens};
            judge->policy.deterministic_mode = spec.deterministic;
        }
        if (spec.expected.answer) {
            auto eval = evaluate_answer(r.answer, *spec.expected.answer, judge ? &*judge : nullptr, &env->prompts,
                                        spec.format, spec.query);
            r.verdict = eval.verdict;
            record.warnings.insert(record.warnings.end(), eval.warnings.begin(), eval.warnings.end());
        } else {
            r.verdict = MatchVerdict::Exact;
        }
        record.warnings.insert(record.warnings.end(), answer.warnings.begin(), answer.warnings.end());

        if (rep == 0) {
            std::map<std::string, int> kinds;
            std::set<std::string> fault_types;
            for (const auto& e : events) {
                ++kinds[std::string(to_string(e.kind))];
                if (e.kind == EventKind::Fault && e.payload.contains("fault")) {
                    fault_types.insert(e.payload["fault"].value("fault_type", ""));
                }
            }
            for (const auto& [kind, count] : spec.expected.event_kinds) {
                if (kinds[kind] != count) {
                    record.failures.push_back("expected " + std::to_string(count) + " '" + kind + "' events, got " +
                                              std::to_string(kinds[kind]));
                }
            }
            for (const auto& [kind, count] : kinds) {
                if (!spec.expected.event_kinds.empty() && !spec.expected.event_kinds.count(kind) && count > 0) {
                    record.failures.push_back("unexpected '" + kind + "' events (" + std::to_string(count) + ")");
                }
            }
            for (const auto& [kind, count] : spec.expected.event_kinds_min) {
                if (kinds[kind] < count) {
                    record.failures.push_back("expected at least " + std::to_string(count) + " '" + kind +
                                              "' events, got " + std::to_string(kinds[kind]));
                }
            }
            for (const auto& t : spec.expected.fault_types) {
                if (!fault_types.count(t)) record.failures.push_back("no '" + t + "' fault was recorded");
            }
        }
        record.repetitions.push_back(std::move(r));
    }

    const auto& first = record.repetitions.front();
    record.run_id = first.run_id;
    record.produced = first.answer;
    record.status = first.status;
    record.match = first.verdict;
    if (spec.deterministic) {
        for (const auto& r : record.repetitions) {
            if (r.answer != first.answer || r.log_digest != first.log_digest || r.status != first.status) {
                record.failures.push_back("deterministic repetitions disagree");
                break;
            }
        }
    }
    if (record.status != spec.expected.status) {
        record.failures.push_back("expected status '" + spec.expected.status + "', got '" + record.status + "'");
    }
    if (record.match == MatchVerdict::Mismatch) {
        record.failures.push_back("answer '" + record.produced + "' does not match '" + record.expected + "'");
    }
    record.std_dev = std_dev_of(record.repetitions);
    record.passed = record.failures.empty();

    if (options.runs_dir) {
        const auto path = *options.runs_dir / "evals" / (spec.name + ".json");
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        write_file_atomic(path, to_json(record).dump(2));
    }
    return record;
}

double population_std_dev(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double acc = 0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(values.size()));
}

ReportSummary summarize(const std::vector<EvalRecord>& records) {
    ReportSummary s;
    s.total = records.size();
    for (const auto& r : records) s.passed += r.passed ? 1 : 0;
    s.pass_rate = s.total == 0 ? 0.0 : 100.0 * static_cast<double>(s.passed) / static_cast<double>(s.total);
    return s;
}

ReportSummary report_summary(const std::vector<EvalRecord>& records, const fs::path& out) {
    if (records.empty()) throw StorageError("report needs at least one evaluation record");
    const auto summary = summarize(records);

    json doc{{"total", summary.total}, {"passed", summary.passed}, {"pass_rate", summary.pass_rate}};
    json rows = json::array();
    std::ostringstream text;
    text << std::left << std::setw(32) << "scenario" << std::setw(8) << "result" << std::setw(16) << "match"
         << std::setw(6) << "reps" << std::setw(10) << "mean(%)" << "std-dev(%)\n";
    for (const auto& r : records) {
        double mean = 0;
        for (const auto& p : r.repetitions) mean += p.verdict == MatchVerdict::Mismatch ? 0.0 : 100.0;
        if (!r.repetitions.empty()) mean /= static_cast<double>(r.repetitions.size());
        const double sd = r.std_dev.value_or(0.0);
        rows.push_back({{"scenario", r.scenario},
                        {"passed", r.passed},
                        {"match", to_string(r.match)},
                        {"repetitions", r.repetitions.size()},
                        {"mean_score", mean},
                        {"std_dev", sd},
                        {"failures", r.failures}});
        std::ostringstream m, d;
        m << std::fixed << std::setprecision(1) << mean;
        d << std::fixed << std::setprecision(1) << sd;
        text << std::left << std::setw(32) << r.scenario << std::setw(8) << (r.passed ? "PASS" : "FAIL")
             << std::setw(16) << to_string(r.match) << std::setw(6) << r.repetitions.size() << std::setw(10)
             << m.str() << d.str() << "\n";
        for (const auto& f : r.failures) text << "    - " << f << "\n";
    }
    doc["scenarios"] = rows;
    std::ostringstream rate;
    rate << std::fixed << std::setprecision(1) << summary.pass_rate;
    text << "\npass rate: " << summary.passed << "/" << summary.total << " (" << rate.str() << "%)\n";

    fs::path text_path = out;
    text_path.replace_extension(out.extension() == ".txt" ? ".report.txt" : ".txt");
    std::error_code ec;
    if (out.has_parent_path()) fs::create_directories(out.parent_path(), ec);
    write_file_atomic(out, doc.dump(2));
    write_file_atomic(text_path, text.str());
    return summary;
}

}  // namespace agentflow
