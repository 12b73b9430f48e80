#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "agentflow/backend.hpp"
#include "agentflow/message.hpp"
#include "agentflow/prompts.hpp"

namespace agentflow {

class EmptyQueryError : public Error {
public:
    EmptyQueryError() : Error("query must be non-empty") {}
};

class EmptyTranscriptError : public Error {
public:
    EmptyTranscriptError() : Error("transcript contains no assistant message") {}
};

inline constexpr std::string_view kNormalizationUnavailable = "normalization unavailable";

// One backend call with the normalization prompt. The reply is a JSON object
// {clarified_goal, restored_constraints: [{text, kind}], ambiguity_flags,
// hints, answer_format}. Any backend failure or unusable reply degrades to
// the identity task flagged kNormalizationUnavailable. Throws EmptyQueryError
// before contacting the backend when the query is blank.
NormalizedTask augment_query(std::string_view query, const BackendHandle& backend, const PromptLibrary& prompts);

// The task used when the input processor is disabled.
NormalizedTask identity_task(std::string_view query);

// One backend call with the synthesis prompt over the transcript. The reply
// is a JSON object {final_answer, evidence: [{claim, source}], warnings}.
// On backend failure falls back to the boxed answer of the last assistant
// message. Evidence always cites existing turns as "turn:<index>".
StructuredAnswer synthesize_output(const std::vector<TurnRecord>& transcript, const NormalizedTask& task,
                                   const BackendHandle& backend, const PromptLibrary& prompts);

// The answer used when the output processor is disabled, and the fallback
// of synthesize_output: built from the transcript without a backend call.
StructuredAnswer direct_answer(const std::vector<TurnRecord>& transcript, const NormalizedTask& task);

// Text view of a transcript, as shown to the synthesis backend.
std::string render_transcript(const std::vector<TurnRecord>& transcript);

}  // namespace agentflow
