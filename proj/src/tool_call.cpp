#include "agentflow/tool_call.hpp"

#include <cctype>
#include <vector>

namespace agentflow {

namespace {

struct Cursor {
    std::string_view text;
    std::size_t pos = 0;

    void skip_space() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool consume(std::string_view token) {
        if (text.substr(pos, token.size()) == token) {
            pos += token.size();
            return true;
        }
        return false;
    }
};

// Content up to `close`, leaving the cursor after it. The search stops at the
// next block opener so a missing closer cannot swallow a following block.
std::optional<std::string_view> take_until(Cursor& c, std::string_view close, std::size_t limit) {
    const auto end = c.text.find(close, c.pos);
    if (end == std::string_view::npos || end > limit) return std::nullopt;
    auto content = c.text.substr(c.pos, end - c.pos);
    c.pos = end + close.size();
    return content;
}

struct ParsedBlock {
    ToolInvocation invocation;
    std::size_t end = 0;
};

ParsedBlock parse_block(std::string_view text, std::size_t start) {
    Cursor c{text, start + kToolBlockOpen.size()};
    const auto next_open = text.find(kToolBlockOpen, c.pos);
    const std::size_t limit = next_open == std::string_view::npos ? text.size() : next_open;

    auto tagged = [&](std::string_view name) -> std::string {
        c.skip_space();
        const std::string open = "<" + std::string(name) + ">";
        const std::string close = "</" + std::string(name) + ">";
        if (!c.consume(open)) {
            throw MalformedCall("missing " + open, "tags must appear as server_name, tool_name, arguments");
        }
        auto content = take_until(c, close, limit);
        if (!content) throw MalformedCall("missing " + close);
        return std::string(*content);
    };

    ParsedBlock block;
    block.invocation.server_name = trim(tagged("server_name"));
    block.invocation.tool_name = trim(tagged("tool_name"));
    if (block.invocation.server_name.empty()) throw MalformedCall("empty <server_name>");
    if (block.invocation.tool_name.empty()) throw MalformedCall("empty <tool_name>");
    const std::string args_text = tagged("arguments");
    try {
        block.invocation.arguments = json::parse(args_text);
    } catch (const json::parse_error& e) {
        throw MalformedCall("invalid arguments", e.what());
    }
    if (!block.invocation.arguments.is_object()) {
        throw MalformedCall("invalid arguments", "arguments must be a JSON object");
    }
    c.skip_space();
    if (c.pos > limit || !c.consume(kToolBlockClose)) throw MalformedCall("unclosed block");
    block.end = c.pos;
    block.invocation.raw_text = std::string(text.substr(start, block.end - start));
    return block;
}

}  // namespace

bool contains_tool_block(std::string_view text) {
    return text.find(kToolBlockOpen) != std::string_view::npos;
}

std::optional<ToolInvocation> parse_tool_call(std::string_view assistant_text) {
    std::vector<ToolInvocation> found;
    std::size_t pos = 0;
    while (true) {
        const auto start = assistant_text.find(kToolBlockOpen, pos);
        if (start == std::string_view::npos) break;
        auto block = parse_block(assistant_text, start);
        found.push_back(std::move(block.invocation));
        pos = block.end;
    }
    if (found.size() > 1) throw MultipleCalls(found.size());
    if (found.empty()) return std::nullopt;
    return std::move(found.front());
}

std::string serialize_tool_call(const ToolInvocation& invocation) {
    std::string out;
    out += kToolBlockOpen;
    out += "\n<server_name>" + invocation.server_name + "</server_name>\n";
    out += "<tool_name>" + invocation.tool_name + "</tool_name>\n";
    out += "<arguments>\n" + invocation.arguments.dump(2) + "\n</arguments>\n";
    out += kToolBlockClose;
    return out;
}

}  // namespace agentflow
