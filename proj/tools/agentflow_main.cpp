#include <CLI11.hpp>

#include <algorithm>
#include <iostream>

#include "agentflow/harness.hpp"

namespace fs = std::filesystem;
using namespace agentflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitLoadError = 2;

struct EnvOptions {
    std::string graph;
    std::string backends;
    std::string tools;
    std::string corpus;
    std::string sandbox;
    std::string resources;
    std::string runs_dir = "runs";
    std::string format;
    bool deterministic = false;
    std::uint64_t seed = 0;
};

void add_env_options(CLI::App* cmd, EnvOptions& o) {
    cmd->add_option("--graph", o.graph, "Agent graph JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--backends", o.backends, "Backend profiles JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--tools", o.tools, "Tool manifest JSON (builtin stubs when omitted)")->check(CLI::ExistingFile);
    cmd->add_option("--corpus", o.corpus, "Search corpus for the scripted search tools")->check(CLI::ExistingFile);
    cmd->add_option("--sandbox", o.sandbox, "Directory visible to tool-reader/file-read")->check(CLI::ExistingDirectory);
    cmd->add_option("--resources", o.resources, "Resources directory holding prompts/");
    cmd->add_option("--runs-dir", o.runs_dir, "Run store root");
    cmd->add_option("--format", o.format, "Expected answer format (text, integer, number, list, unordered-list)");
    cmd->add_flag("--deterministic", o.deterministic, "Scripted backends only, fixed date, zero retry delays");
    cmd->add_option("--seed", o.seed, "Seed for retry jitter");
}

PromptLibrary load_prompts(const std::string& resources) {
    const auto dir = resolve_resources_dir(resources.empty() ? std::nullopt : std::optional<fs::path>(resources));
    return PromptLibrary::load(dir);
}

ScenarioSpec spec_from(const EnvOptions& o, const std::string& query) {
    ScenarioSpec s;
    s.name = "cli";
    s.graph = o.graph;
    s.backends = o.backends;
    if (!o.tools.empty()) s.tools = o.tools;
    if (!o.corpus.empty()) s.corpus = o.corpus;
    if (!o.sandbox.empty()) s.sandbox = o.sandbox;
    s.query = query;
    if (!o.format.empty()) {
        s.format = answer_format_from_string(o.format);
        if (!s.format) throw ConfigError("unknown answer format '" + o.format + "'");
    }
    s.deterministic = o.deterministic;
    return s;
}

RunConfig config_from(const EnvOptions& o, const ScenarioSpec& s) {
    RunConfig c;
    c.mode = o.deterministic ? RunMode::Deterministic : RunMode::Live;
    c.seed = o.seed;
    c.answer_format = s.format;
    c.store = fs::path(o.runs_dir);
    return c;
}

void print_result(const std::string& run_id, const std::string& status, const StructuredAnswer& answer) {
    std::cout << json{{"run_id", run_id}, {"status", status}, {"answer", to_json(answer)}}.dump(2) << "\n";
}

std::vector<fs::path> eval_files(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            const fs::path evals = fs::is_directory(p / "evals") ? p / "evals" : p;
            for (const auto& e : fs::directory_iterator(evals)) {
                if (e.path().extension() == ".json") files.push_back(e.path());
            }
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agentflow: hierarchical agent graphs with typed fault handling"};
    app.require_subcommand(1);

    EnvOptions run_opts;
    std::string query;
    auto* run_cmd = app.add_subcommand("run", "Execute one task on an agent graph");
    add_env_options(run_cmd, run_opts);
    run_cmd->add_option("--query", query, "Task text")->required();

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "Check a graph for invariant violations");
    validate_cmd->add_option("graph", validate_path, "Agent graph JSON")->required();

    std::vector<std::string> scenario_paths;
    int reps = 3;
    std::string scenario_runs = "runs";
    std::string scenario_resources;
    std::string scenario_report;
    bool live = false;
    auto* scenario_cmd = app.add_subcommand("scenario", "Run fault-injection scenarios and compare answers");
    scenario_cmd->add_option("spec", scenario_paths, "Scenario spec JSON files")->required();
    scenario_cmd->add_option("--reps", reps, "Repetitions per scenario")->check(CLI::PositiveNumber);
    scenario_cmd->add_option("--runs-dir", scenario_runs, "Run store root");
    scenario_cmd->add_option("--resources", scenario_resources, "Resources directory holding prompts/");
    scenario_cmd->add_option("--out", scenario_report, "Also write a summary report to this path");
    scenario_cmd->add_flag("--live", live, "Allow scenarios that use live backends");

    std::string replay_id;
    std::string replay_runs = "runs";
    auto* replay_cmd = app.add_subcommand("replay", "Rebuild a run's transcript from its event log");
    replay_cmd->add_option("run_id", replay_id, "Run id")->required();
    replay_cmd->add_option("--runs-dir", replay_runs, "Run store root");

    std::vector<std::string> report_inputs;
    std::string report_out;
    auto* report_cmd = app.add_subcommand("report", "Summarize evaluation records");
    report_cmd->add_option("runs", report_inputs, "Evaluation record files or run directories")->required();
    report_cmd->add_option("--out", report_out, "Report path (JSON; a .txt table is written next to it)")->required();

    EnvOptions resume_opts;
    std::string resume_id;
    int resume_checkpoint = 0;
    auto* resume_cmd = app.add_subcommand("resume", "Continue a run from its latest (or a given) checkpoint");
    resume_cmd->add_option("run_id", resume_id, "Run id")->required();
    resume_cmd->add_option("--checkpoint", resume_checkpoint, "Checkpoint index");
    add_env_options(resume_cmd, resume_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            const auto prompts = load_prompts(run_opts.resources);
            const auto spec = spec_from(run_opts, query);
            auto env = build_environment(spec, prompts);
            try {
                const auto result = execute_task(env->context(), query, config_from(run_opts, spec));
                print_result(result.run_id, std::string(to_string(result.status)), result.answer);
                return kExitOk;
            } catch (const WallClockExceeded& e) {
                print_result(e.run_id(), "budget-stop", e.partial());
                return kExitMismatch;
            }
        }
        if (*validate_cmd) {
            const auto graph = load_graph_spec(validate_path);
            const auto report = validate_graph(graph);
            if (report.empty()) {
                std::cout << "valid: " << graph.nodes.size() << " node(s), entry '" << graph.entry << "'\n";
                return kExitOk;
            }
            for (const auto& v : report) std::cout << describe(v) << "\n";
            return kExitMismatch;
        }
        if (*scenario_cmd) {
            const auto prompts = load_prompts(scenario_resources);
            std::vector<ScenarioSpec> specs;
            for (const auto& p : scenario_paths) specs.push_back(load_scenario(p));
            std::vector<EvalRecord> records;
            ScenarioOptions options;
            options.runs_dir = fs::path(scenario_runs);
            options.live = live;
            for (const auto& spec : specs) {
                auto record = run_scenario(spec, reps, prompts, options);
                std::cout << (record.passed ? "PASS " : "FAIL ") << record.scenario << ": answer '" << record.produced
                          << "' (" << to_string(record.match) << "), status " << record.status << "\n";
                for (const auto& f : record.failures) std::cout << "  - " << f << "\n";
                records.push_back(std::move(record));
            }
            if (!scenario_report.empty()) report_summary(records, scenario_report);
            const bool all = std::all_of(records.begin(), records.end(), [](const EvalRecord& r) { return r.passed; });
            return all ? kExitOk : kExitMismatch;
        }
        if (*replay_cmd) {
            const auto transcript = replay_run(replay_id, RunStore(replay_runs));
            json out = json::array();
            for (const auto& r : transcript) out.push_back(to_json(r));
            std::cout << out.dump(2) << "\n";
            return kExitOk;
        }
        if (*report_cmd) {
            std::vector<EvalRecord> records;
            for (const auto& f : eval_files(report_inputs)) {
                records.push_back(eval_record_from_json(parse_json_document(read_file(f))));
            }
            const auto summary = report_summary(records, report_out);
            std::cout << "pass rate: " << summary.passed << "/" << summary.total << "\n";
            return summary.passed == summary.total ? kExitOk : kExitMismatch;
        }
        if (*resume_cmd) {
            const auto prompts = load_prompts(resume_opts.resources);
            const RunStore store(resume_opts.runs_dir);
            const auto manifest = read_manifest(resume_id, store);
            resume_opts.deterministic = manifest.mode == RunMode::Deterministic;
            const auto spec = spec_from(resume_opts, manifest.query);
            auto env = build_environment(spec, prompts);
            const auto index = resume_checkpoint > 0 ? std::optional<int>(resume_checkpoint) : std::nullopt;
            try {
                const auto result =
                    resume_from_checkpoint(resume_id, index, store, env->context(), config_from(resume_opts, spec));
                print_result(result.run_id, std::string(to_string(result.status)), result.answer);
                return kExitOk;
            } catch (const WallClockExceeded& e) {
                print_result(e.run_id(), "budget-stop", e.partial());
                return kExitMismatch;
            }
        }
    } catch (const InvalidGraph& e) {
        std::cerr << e.what() << "\n";
        return kExitMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitLoadError;
    }
    return kExitOk;
}
