#include "agentflow/processors.hpp"

#include <algorithm>
#include <set>

#include "agentflow/answer.hpp"

namespace agentflow {

namespace {

// The first balanced JSON object in the reply, tolerating code fences and
// surrounding prose.
std::optional<json> json_object_in(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                try {
                    auto j = json::parse(text.substr(start, i - start + 1));
                    if (j.is_object()) return j;
                } catch (const json::parse_error&) {
                }
                break;
            }
        }
    }
    return std::nullopt;
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key) || !j.at(key).is_array()) return out;
    for (const auto& v : j.at(key)) {
        if (v.is_string() && !trim(v.get<std::string>()).empty()) out.push_back(trim(v.get<std::string>()));
    }
    return out;
}

bool has_assistant_message(const std::vector<TurnRecord>& transcript) {
    return std::any_of(transcript.begin(), transcript.end(),
                       [](const TurnRecord& r) { return r.response.role == Role::Assistant; });
}

std::string turn_source(const TurnRecord& r) { return "turn:" + std::to_string(r.turn_index); }

void apply_format(StructuredAnswer& answer, const NormalizedTask& task) {
    answer.format_tag = task.format_tag;
    if (!task.format_tag || answer.final_answer.empty()) return;
    if (auto shaped = conform_to_format(answer.final_answer, *task.format_tag)) {
        answer.final_answer = *shaped;
    } else {
        answer.warnings.push_back("answer does not match the expected format '" +
                                  std::string(to_string(*task.format_tag)) + "'");
    }
}

}  // namespace

NormalizedTask identity_task(std::string_view query) {
    NormalizedTask task;
    task.original_query = std::string(query);
    task.clarified_goal = trim(query);
    return task;
}

NormalizedTask augment_query(std::string_view query, const BackendHandle& backend, const PromptLibrary& prompts) {
    if (trim(query).empty()) throw EmptyQueryError();
    NormalizedTask degraded = identity_task(query);
    degraded.ambiguity_flags.push_back(std::string(kNormalizationUnavailable));

    ChatRequest request;
    request.messages.push_back({Role::System, prompts.get("normalize.txt"), 0, backend.node_id, {}});
    request.messages.push_back({Role::User, std::string(query), 1, backend.node_id, {}});
    std::string reply;
    try {
        reply = call_backend(backend, request).message.content;
    } catch (const Error&) {
        return degraded;
    }
    const auto doc = json_object_in(reply);
    if (!doc || !doc->contains("clarified_goal") || !(*doc)["clarified_goal"].is_string() ||
        trim((*doc)["clarified_goal"].get<std::string>()).empty()) {
        return degraded;
    }
    NormalizedTask task;
    task.original_query = std::string(query);
    task.clarified_goal = trim((*doc)["clarified_goal"].get<std::string>());
    if (doc->contains("restored_constraints") && (*doc)["restored_constraints"].is_array()) {
        for (const auto& c : (*doc)["restored_constraints"]) {
            if (c.is_string()) {
                task.restored_constraints.push_back({c.get<std::string>(), ConstraintKind::Other});
            } else if (c.is_object() && c.contains("text") && c["text"].is_string()) {
                ConstraintKind kind = ConstraintKind::Other;
                try {
                    kind = constraint_kind_from_string(c.value("kind", "other"));
                } catch (const Error&) {
                }
                task.restored_constraints.push_back({c["text"].get<std::string>(), kind});
            }
        }
    }
    task.ambiguity_flags = string_list(*doc, "ambiguity_flags");
    task.hints = string_list(*doc, "hints");
    if (doc->contains("answer_format") && (*doc)["answer_format"].is_string()) {
        task.format_tag = answer_format_from_string((*doc)["answer_format"].get<std::string>());
    }
    return task;
}

std::string render_transcript(const std::vector<TurnRecord>& transcript) {
    std::string out;
    for (const auto& r : transcript) {
        out += "[turn " + std::to_string(r.turn_index) + "] assistant:\n" + r.response.content + "\n";
        if (!r.observation.empty()) {
            out += "[turn " + std::to_string(r.turn_index) + "] observation:\n" + r.observation + "\n";
        }
    }
    return out;
}

StructuredAnswer direct_answer(const std::vector<TurnRecord>& transcript, const NormalizedTask& task) {
    if (!has_assistant_message(transcript)) throw EmptyTranscriptError();
    StructuredAnswer answer;
    const TurnRecord* last = nullptr;
    for (const auto& r : transcript) {
        if (r.response.role == Role::Assistant) last = &r;
    }
    if (auto boxed = extract_boxed_answer(last->response.content)) {
        answer.final_answer = trim(*boxed);
    } else if (last->kind == TurnKind::Final && !last->final_text.empty()) {
        answer.final_answer = trim(last->final_text);
    } else {
        answer.final_answer = trim(last->response.content);
        answer.warnings.push_back("no final answer marker in the last assistant message");
    }
    for (const auto& r : transcript) {
        if (r.tool_outcome && r.tool_outcome->is_ok() && r.tool_invocation) {
            answer.evidence.push_back({"result of " + r.tool_invocation->tool_id(), turn_source(r)});
        } else if (r.kind == TurnKind::Delegate && !r.delegate_to.empty() && r.fault == std::nullopt) {
            answer.evidence.push_back({"result of agent " + r.delegate_to, turn_source(r)});
        }
    }
    answer.evidence.push_back({"final answer stated", turn_source(*last)});
    apply_format(answer, task);
    return answer;
}

StructuredAnswer synthesize_output(const std::vector<TurnRecord>& transcript, const NormalizedTask& task,
                                   const BackendHandle& backend, const PromptLibrary& prompts) {
    if (!has_assistant_message(transcript)) throw EmptyTranscriptError();

    ChatRequest request;
    request.messages.push_back({Role::System, prompts.get("synthesize.txt"), 0, backend.node_id, {}});
    std::string user = "Task:\n" + render_task(task) + "\n\nOriginal question:\n" + task.original_query +
                       "\n\nTranscript:\n" + render_transcript(transcript);
    request.messages.push_back({Role::User, std::move(user), 1, backend.node_id, {}});

    std::string reply;
    try {
        reply = call_backend(backend, request).message.content;
    } catch (const Error& e) {
        auto answer = direct_answer(transcript, task);
        answer.warnings.insert(answer.warnings.begin(), "synthesis unavailable: " + truncate_text(e.what(), 300));
        return answer;
    }

    StructuredAnswer answer;
    const auto doc = json_object_in(reply);
    if (doc && doc->contains("final_answer") && (*doc)["final_answer"].is_string() &&
        !trim((*doc)["final_answer"].get<std::string>()).empty()) {
        answer.final_answer = trim((*doc)["final_answer"].get<std::string>());
        std::set<std::string> valid;
        for (const auto& r : transcript) valid.insert(turn_source(r));
        if (doc->contains("evidence") && (*doc)["evidence"].is_array()) {
            for (const auto& e : (*doc)["evidence"]) {
                if (!e.is_object()) continue;
                const std::string source = e.value("source", "");
                if (!valid.count(source)) {
                    answer.warnings.push_back("dropped evidence citing unknown source '" + source + "'");
                    continue;
                }
                answer.evidence.push_back({e.value("claim", ""), source});
            }
        }
        answer.warnings = [&] {
            auto w = string_list(*doc, "warnings");
            w.insert(w.end(), answer.warnings.begin(), answer.warnings.end());
            return w;
        }();
    } else if (auto boxed = extract_boxed_answer(reply)) {
        answer.final_answer = trim(*boxed);
    } else {
        auto fallback = direct_answer(transcript, task);
        fallback.warnings.insert(fallback.warnings.begin(), "synthesis reply was not usable");
        return fallback;
    }
    if (answer.evidence.empty()) {
        for (auto it = transcript.rbegin(); it != transcript.rend(); ++it) {
            if (it->response.role == Role::Assistant) {
                answer.evidence.push_back({"final answer stated", turn_source(*it)});
                break;
            }
        }
    }
    apply_format(answer, task);
    return answer;
}

}  // namespace agentflow
