#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentflow/runtime.hpp"

namespace agentflow {

enum class CandidateStatus { Ok, Failed };

struct Candidate {
    std::string answer;      // canonical form; empty when failed
    std::string raw_answer;  // as produced by the member
    std::string backend;
    std::string prompt_variant;
    std::size_t member_index = 0;  // declaration index
    double weight = 1.0;
    std::vector<Evidence> evidence;
    CandidateStatus status = CandidateStatus::Ok;
    std::string failure;  // reason when failed

    bool operator==(const Candidate&) const = default;
};

struct VoteResult {
    std::string winner;
    std::map<std::string, double> tally;
    bool tie_broken = false;
    std::size_t participating = 0;
    // Declaration index of the earliest member in the winning bucket.
    std::size_t winner_member = 0;
};

class NoCandidates : public Error {
public:
    NoCandidates() : Error("no ok candidates to aggregate") {}
};

class AllMembersFailed : public Error {
public:
    explicit AllMembersFailed(std::vector<Candidate> candidates)
        : Error("all " + std::to_string(candidates.size()) + " ensemble members failed"),
          candidates_(std::move(candidates)) {}
    const std::vector<Candidate>& candidates() const noexcept { return candidates_; }

private:
    std::vector<Candidate> candidates_;
};

// Sums weights per canonical answer over ok candidates (unit weights in
// majority mode) and picks the maximal bucket; ties go to the bucket whose
// earliest member has the lowest declaration index.
VoteResult aggregate_votes(const std::vector<Candidate>& candidates, AggregationMode mode);

struct EnsembleResult {
    VoteResult vote;
    std::vector<Candidate> candidates;  // declaration order
};

// One full agent execution per member: the node with the member's backend
// and prompt variant, heavy mode removed. Members denied by the spawn budget
// or stopped by the wall clock become failed candidates. Member events are
// written in declaration order. Throws AllMembersFailed.
EnsembleResult run_ensemble(const AgentNodeSpec& node, const HeavyModeSpec& config, const std::string& subtask,
                            RuntimeEnv& env, int depth);

enum class Verdict { Accept, Revise };

struct ParsedVerdict {
    Verdict verdict = Verdict::Revise;
    std::string feedback;
};

// First line exactly ACCEPT or REVISE (surrounding whitespace ignored); the
// rest is feedback. nullopt for anything else.
std::optional<ParsedVerdict> parse_verdict(std::string_view text);

struct VerificationRound {
    int round = 0;  // 1-based
    std::string candidate_answer;
    Verdict verdict = Verdict::Revise;
    std::string feedback;
    bool generator_failed = false;
};

struct VerificationTrace {
    std::vector<VerificationRound> rounds;
    bool stopped_early = false;  // ended by an accept
    Candidate final;
    bool verified = false;
    bool all_rounds_failed = false;
};

// Generator runs alternate with verifier calls; REVISE feedback is appended
// to the next generator task. Stops at the first ACCEPT or after
// min(config.rounds, remaining round budget) rounds.
VerificationTrace run_verification_loop(const AgentNodeSpec& node, const HeavyModeSpec& config,
                                        const std::string& subtask, RuntimeEnv& env, int depth);

// True iff the node has heavy mode configured and its trigger fires:
// always; sentinel when `model_output` contains <needs_heavy/>; never.
bool maybe_activate_heavy(const AgentNodeSpec& node, std::optional<std::string_view> model_output);

struct HeavyOutcome {
    std::optional<std::string> answer;  // raw answer on success
    std::optional<FaultArtifact> fault;
    std::string summary;  // human-readable account of the policy run
};

// Runs the node's configured policy on `task`.
HeavyOutcome run_heavy(const AgentNodeSpec& node, const std::string& task, RuntimeEnv& env, int depth);

}  // namespace agentflow
