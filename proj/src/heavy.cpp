#include "agentflow/heavy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "agentflow/answer.hpp"
#include "agentflow/processors.hpp"

namespace agentflow {

namespace {

constexpr double kVoteTolerance = 1e-9;

bool nearly_equal(double a, double b) {
    return std::fabs(a - b) <= kVoteTolerance * std::max({1.0, std::fabs(a), std::fabs(b)});
}

EventSink& sink_of(RuntimeEnv& env) {
    static NullSink null_sink;
    return env.log != nullptr ? *env.log : null_sink;
}

// The node as run by one heavy-mode member: no heavy mode, no processors.
AgentNodeSpec member_node(const AgentNodeSpec& node, const std::string& backend, const std::string& variant_text) {
    AgentNodeSpec m = node;
    m.heavy_mode.reset();
    m.input_processor.enabled = false;
    m.output_processor.enabled = false;
    if (!backend.empty()) m.backend = backend;
    if (!variant_text.empty()) m.prompt += "\n\n" + variant_text;
    return m;
}

struct MemberRun {
    AgentStatus status = AgentStatus::Running;
    std::string text;
    std::string error;
    std::vector<TurnRecord> transcript;
};

// Isolated execution context for one member: own sink and journal, no
// checkpoint hook and no resume chain.
MemberRun run_member(const AgentNodeSpec& node, const std::string& task, const RuntimeEnv& parent, EventSink& sink,
                     RecordJournal& journal, int depth) {
    RuntimeEnv env = parent;
    env.log = &sink;
    env.journal = &journal;
    env.on_turn_complete = nullptr;
    env.resume_chain = nullptr;
    std::vector<AgentState*> frontier;
    env.frontier = &frontier;
    MemberRun run;
    try {
        AgentState state = fresh_state(node, task, depth);
        run.text = run_agent(state, env);
        run.status = state.status;
        run.transcript = std::move(state.transcript);
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    return run;
}

Candidate candidate_from(const MemberRun& run, const RuntimeEnv& env) {
    Candidate c;
    if (!run.error.empty()) {
        c.status = CandidateStatus::Failed;
        c.failure = run.error;
        return c;
    }
    if (run.status != AgentStatus::Finished || trim(run.text).empty()) {
        c.status = CandidateStatus::Failed;
        c.failure = "stopped without a final answer (" + std::string(to_string(run.status)) + ")";
        c.raw_answer = run.text;
        return c;
    }
    c.raw_answer = run.text;
    c.answer = canonicalize_answer(run.text, env.answer_format);
    c.evidence = direct_answer(run.transcript, identity_task("")).evidence;
    return c;
}

FaultArtifact heavy_fault(FaultType type, const AgentNodeSpec& node, const std::string& body) {
    return {type, fault_summary(type, body), {"heavy:" + node.id, ""}};
}

std::string format_tally(const VoteResult& vote) {
    std::ostringstream out;
    bool first = true;
    for (const auto& [answer, weight] : vote.tally) {
        if (!first) out << "; ";
        first = false;
        out << "'" << answer << "' " << format_number(weight);
    }
    return out.str();
}

std::string verdict_name(Verdict v) { return v == Verdict::Accept ? "ACCEPT" : "REVISE"; }

}  // namespace

VoteResult aggregate_votes(const std::vector<Candidate>& candidates, AggregationMode mode) {
    VoteResult result;
    std::map<std::string, std::size_t> earliest;
    for (const auto& c : candidates) {
        if (c.status != CandidateStatus::Ok) continue;
        ++result.participating;
        result.tally[c.answer] += mode == AggregationMode::Weighted ? c.weight : 1.0;
        auto [it, inserted] = earliest.emplace(c.answer, c.member_index);
        if (!inserted) it->second = std::min(it->second, c.member_index);
    }
    if (result.participating == 0) throw NoCandidates();

    double best = 0;
    for (const auto& [answer, weight] : result.tally) best = std::max(best, weight);
    std::size_t tied = 0;
    bool chosen = false;
    for (const auto& [answer, weight] : result.tally) {
        if (!nearly_equal(weight, best)) continue;
        ++tied;
        if (!chosen || earliest.at(answer) < result.winner_member) {
            chosen = true;
            result.winner = answer;
            result.winner_member = earliest.at(answer);
        }
    }
    result.tie_broken = tied > 1;
    return result;
}

EnsembleResult run_ensemble(const AgentNodeSpec& node, const HeavyModeSpec& config, const std::string& subtask,
                            RuntimeEnv& env, int depth) {
    EventSink& log = sink_of(env);
    const std::size_t n = config.members.size();
    std::vector<Candidate> candidates(n);
    std::vector<AgentNodeSpec> nodes(n);
    std::vector<bool> admitted(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& member = config.members[i];
        auto& c = candidates[i];
        c.backend = member.backend;
        c.prompt_variant = member.prompt_variant;
        c.member_index = i;
        c.weight = member.weight;
        try {
            const std::string variant_text = env.prompts != nullptr ? env.prompts->variant(member.prompt_variant) : "";
            nodes[i] = member_node(node, member.backend, variant_text);
        } catch (const std::exception& e) {
            c.status = CandidateStatus::Failed;
            c.failure = e.what();
            continue;
        }
        if (env.backends == nullptr || !env.backends->contains(nodes[i].backend)) {
            c.status = CandidateStatus::Failed;
            c.failure = "unknown backend '" + nodes[i].backend + "'";
            continue;
        }
        if (env.budget != nullptr && !env.budget->try_spawn(log, node.id)) {
            c.status = CandidateStatus::Failed;
            c.failure = "spawned-agents budget exhausted";
            continue;
        }
        admitted[i] = true;
    }

    std::vector<BufferedSink> sinks(n);
    std::vector<RecordJournal> journals(n);
    std::vector<MemberRun> runs(n);
    auto run_one = [&](std::size_t i) {
        runs[i] = run_member(nodes[i], subtask, env, sinks[i], journals[i], depth);
    };
    const std::size_t cap = env.deterministic ? 1 : static_cast<std::size_t>(std::max(1, env.ensemble_parallelism));
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (admitted[i]) queue.push_back(i);
    }
    for (std::size_t start = 0; start < queue.size(); start += cap) {
        const std::size_t end = std::min(queue.size(), start + cap);
        if (end - start == 1) {
            run_one(queue[start]);
            continue;
        }
        std::vector<std::thread> batch;
        for (std::size_t k = start; k < end; ++k) batch.emplace_back(run_one, queue[k]);
        for (auto& t : batch) t.join();
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto& c = candidates[i];
        if (admitted[i]) {
            sinks[i].flush_into(log);
            if (env.journal != nullptr) env.journal->append_all(journals[i].entries());
            Candidate produced = candidate_from(runs[i], env);
            c.answer = produced.answer;
            c.raw_answer = produced.raw_answer;
            c.evidence = produced.evidence;
            c.status = produced.status;
            c.failure = produced.failure;
        }
        json payload{{"index", i},
                     {"backend", c.backend},
                     {"prompt_variant", c.prompt_variant},
                     {"weight", c.weight},
                     {"status", c.status == CandidateStatus::Ok ? "ok" : "failed"},
                     {"answer", c.answer}};
        if (c.status == CandidateStatus::Failed) payload["failure"] = c.failure;
        log.emit(EventKind::EnsembleMember, node.id, payload);
    }

    EnsembleResult result;
    try {
        result.vote = aggregate_votes(candidates, config.aggregation);
    } catch (const NoCandidates&) {
        throw AllMembersFailed(std::move(candidates));
    }
    result.candidates = std::move(candidates);
    return result;
}

std::optional<ParsedVerdict> parse_verdict(std::string_view text) {
    const auto trimmed = trim(text);
    const auto eol = trimmed.find('\n');
    const std::string first = trim(std::string_view(trimmed).substr(0, eol));
    ParsedVerdict v;
    if (first == "ACCEPT") {
        v.verdict = Verdict::Accept;
    } else if (first == "REVISE") {
        v.verdict = Verdict::Revise;
    } else {
        return std::nullopt;
    }
    if (eol != std::string::npos) v.feedback = trim(std::string_view(trimmed).substr(eol + 1));
    return v;
}

VerificationTrace run_verification_loop(const AgentNodeSpec& node, const HeavyModeSpec& config,
                                        const std::string& subtask, RuntimeEnv& env, int depth) {
    EventSink& log = sink_of(env);
    VerificationTrace trace;
    const AgentNodeSpec generator = member_node(node, "", "");
    const std::string& verifier_id = config.verifier_backend.empty() ? node.backend : config.verifier_backend;
    std::optional<Candidate> last_ok;
    std::string feedback_block;

    for (int round = 1; round <= config.rounds; ++round) {
        if (env.budget != nullptr && !env.budget->try_round(log, node.id)) break;
        VerificationRound vr;
        vr.round = round;
        const std::string task = subtask + feedback_block;
        RecordJournal journal;
        const MemberRun run = run_member(generator, task, env, log, journal, depth);
        if (env.journal != nullptr) env.journal->append_all(journal.entries());
        Candidate candidate = candidate_from(run, env);
        candidate.backend = generator.backend;
        candidate.member_index = static_cast<std::size_t>(round - 1);

        if (candidate.status == CandidateStatus::Failed) {
            vr.generator_failed = true;
            vr.feedback = "generator produced no answer: " + candidate.failure;
        } else {
            vr.candidate_answer = candidate.raw_answer;
            last_ok = candidate;
            ChatRequest request;
            request.temperature = 0.0;
            request.messages.push_back({Role::System, env.prompts->get("verifier.txt"), 0, node.id, {}});
            request.messages.push_back({Role::User,
                                        "Task:\n" + subtask + "\n\nProposed answer:\n" + candidate.raw_answer +
                                            "\n\nTranscript:\n" + render_transcript(run.transcript),
                                        1, node.id, {}});
            BackendHandle handle{&env.backends->get(verifier_id), env.backend_retry, &log, node.id, "verify",
                                 estimate_tokens};
            try {
                const auto reply = call_backend(handle, request).message.content;
                if (auto parsed = parse_verdict(reply)) {
                    vr.verdict = parsed->verdict;
                    vr.feedback = parsed->feedback;
                } else {
                    vr.feedback = "unparseable verdict: " + truncate_text(trim(reply), 500);
                }
            } catch (const ClassifiedFailure& e) {
                vr.feedback = std::string("verifier unavailable: ") + e.what();
            } catch (const Error& e) {
                vr.feedback = std::string("verifier unavailable: ") + e.what();
            }
        }

        log.emit(EventKind::VerificationRound, node.id,
                 {{"round", vr.round},
                  {"candidate_answer", vr.candidate_answer},
                  {"verdict", verdict_name(vr.verdict)},
                  {"feedback", vr.feedback},
                  {"generator_failed", vr.generator_failed}});
        trace.rounds.push_back(vr);

        if (vr.verdict == Verdict::Accept) {
            trace.final = candidate;
            trace.verified = true;
            trace.stopped_early = true;
            return trace;
        }
        feedback_block = "\n\nA reviewer rejected the previous answer";
        if (!vr.candidate_answer.empty()) feedback_block += " (" + vr.candidate_answer + ")";
        feedback_block += ". Reviewer feedback:\n" + (vr.feedback.empty() ? std::string("(none)") : vr.feedback);
    }

    if (last_ok) {
        trace.final = *last_ok;
    } else {
        trace.all_rounds_failed = true;
        trace.final.status = CandidateStatus::Failed;
        trace.final.failure = trace.rounds.empty() ? "no verification round could start" : "every round failed";
    }
    return trace;
}

bool maybe_activate_heavy(const AgentNodeSpec& node, std::optional<std::string_view> model_output) {
    if (!node.heavy_mode) return false;
    switch (node.heavy_mode->trigger) {
        case ActivationTrigger::Always: return true;
        case ActivationTrigger::Never: return false;
        case ActivationTrigger::Sentinel:
            return model_output && model_output->find(kHeavySentinel) != std::string_view::npos;
    }
    return false;
}

HeavyOutcome run_heavy(const AgentNodeSpec& node, const std::string& task, RuntimeEnv& env, int depth) {
    const HeavyModeSpec& config = *node.heavy_mode;
    HeavyOutcome outcome;
    if (config.policy == HeavyPolicy::Ensemble) {
        try {
            auto result = run_ensemble(node, config, task, env, depth);
            const auto& winner = result.candidates.at(result.vote.winner_member);
            outcome.answer = winner.raw_answer;
            outcome.summary = "Ensemble of " + std::to_string(result.candidates.size()) + " members, " +
                              std::to_string(result.vote.participating) + " answered. Votes: " +
                              format_tally(result.vote) + "." + (result.vote.tie_broken ? " Tie broken by member order." : "");
        } catch (const AllMembersFailed& e) {
            const bool budget_only = std::all_of(e.candidates().begin(), e.candidates().end(), [](const Candidate& c) {
                return c.failure == "spawned-agents budget exhausted";
            });
            if (budget_only && env.budget != nullptr) {
                outcome.fault = budget_exceeded_artifact("spawned-agents", env.budget->spec().max_spawned_agents,
                                                         {"heavy:" + node.id, ""}, "no ensemble member could start");
            } else {
                std::string reasons;
                for (const auto& c : e.candidates()) {
                    reasons += (reasons.empty() ? "" : "; ") + ("member " + std::to_string(c.member_index) + ": " + c.failure);
                }
                outcome.fault = heavy_fault(FaultType::PermanentFailure, node,
                                            "Every ensemble member failed (" + reasons + ").");
            }
            outcome.summary = e.what();
        }
        return outcome;
    }

    const auto trace = run_verification_loop(node, config, task, env, depth);
    if (trace.all_rounds_failed) {
        if (trace.rounds.empty() && env.budget != nullptr) {
            outcome.fault = budget_exceeded_artifact("verification-rounds", env.budget->spec().max_verification_rounds,
                                                     {"heavy:" + node.id, ""}, "no verification round could start");
        } else {
            outcome.fault = heavy_fault(FaultType::PermanentFailure, node, "Every verification round failed to produce an answer.");
        }
        outcome.summary = trace.final.failure;
        return outcome;
    }
    outcome.answer = trace.final.raw_answer;
    outcome.summary = "Verification ran " + std::to_string(trace.rounds.size()) + " round(s); the answer is " +
                      (trace.verified ? "verified." : "unverified.");
    return outcome;
}

}  // namespace agentflow
