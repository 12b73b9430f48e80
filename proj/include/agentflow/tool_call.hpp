#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "agentflow/errors.hpp"
#include "agentflow/tool_types.hpp"

namespace agentflow {

// A started <use_mcp_tool> block that violates the grammar.
class MalformedCall : public Error {
public:
    MalformedCall(std::string reason, std::string detail = {})
        : Error("malformed tool call: " + reason + (detail.empty() ? "" : " (" + detail + ")")),
          reason_(std::move(reason)), detail_(std::move(detail)) {}

    // Short reason: "unclosed block", "invalid arguments", "missing <tool_name>", ...
    const std::string& reason() const noexcept { return reason_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string reason_;
    std::string detail_;
};

// Two or more well-formed blocks in one message.
class MultipleCalls : public Error {
public:
    explicit MultipleCalls(std::size_t count)
        : Error(std::to_string(count) + " tool calls in one message; exactly one is allowed"),
          count_(count) {}
    std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_;
};

inline constexpr std::string_view kToolBlockOpen = "<use_mcp_tool>";
inline constexpr std::string_view kToolBlockClose = "</use_mcp_tool>";

// Recognizes
//   <use_mcp_tool><server_name>S</server_name><tool_name>T</tool_name>
//   <arguments>JSON object</arguments></use_mcp_tool>
// with tags in exactly this order and any whitespace between tags. Returns
// nullopt when no block is started. Throws MalformedCall or MultipleCalls.
std::optional<ToolInvocation> parse_tool_call(std::string_view assistant_text);

// Layout used by the usage template of the system prompt.
std::string serialize_tool_call(const ToolInvocation& invocation);

// True when the text contains an opening <use_mcp_tool> tag.
bool contains_tool_block(std::string_view text);

}  // namespace agentflow
