#include <gtest/gtest.h>

#include <random>

#include "support/test_env.hpp"

using namespace agentflow;
using namespace agentflow::testing;

namespace {

const std::string kTemplate =
    "<use_mcp_tool>\n"
    "<server_name>server name here</server_name>\n"
    "<tool_name>tool name here</tool_name>\n"
    "<arguments>\n"
    "{\n"
    "\"param1\": \"value1\",\n"
    "\"param2\": \"value2 \\\"escaped string\\\"\"\n"
    "}\n"
    "</arguments>\n"
    "</use_mcp_tool>";

std::string block(const std::string& server, const std::string& tool, const std::string& args,
                  const std::string& close = "</use_mcp_tool>") {
    return "<use_mcp_tool>\n<server_name>" + server + "</server_name>\n<tool_name>" + tool +
           "</tool_name>\n<arguments>\n" + args + "\n</arguments>\n" + close;
}

ToolContract upload_contract() {
    ToolContract c;
    c.server_name = "tool-code";
    c.tool_name = "upload_file_to_sandbox";
    c.input_schema = {{"sandbox_id", FieldType::String, true, ""},
                      {"local_path", FieldType::String, true, ""},
                      {"sandbox_path", FieldType::String, true, ""}};
    return c;
}

ToolInvocation call(const std::string& tool_id, json args) {
    const auto slash = tool_id.find('/');
    return {tool_id.substr(0, slash), tool_id.substr(slash + 1), std::move(args), ""};
}

RetryPolicy fast_retry(int attempts = 3) {
    RetryPolicy p;
    p.max_attempts = attempts;
    p.deterministic_mode = true;
    return p;
}

ToolContract simple_contract(const std::string& id, std::vector<std::string> fallbacks = {}) {
    ToolContract c;
    const auto slash = id.find('/');
    c.server_name = id.substr(0, slash);
    c.tool_name = id.substr(slash + 1);
    c.input_schema = {{"query", FieldType::String, true, ""}};
    c.fallbacks = std::move(fallbacks);
    return c;
}

std::vector<EventKind> kinds(const RunLog& log) {
    std::vector<EventKind> out;
    for (const auto& e : log.entries()) out.push_back(e.kind);
    return out;
}

}  // namespace

TEST(ParseToolCall, VerbatimTemplate) {
    const auto inv = parse_tool_call("I will call the tool.\n" + kTemplate);
    ASSERT_TRUE(inv);
    EXPECT_EQ(inv->server_name, "server name here");
    EXPECT_EQ(inv->tool_name, "tool name here");
    EXPECT_EQ(inv->arguments, (json{{"param1", "value1"}, {"param2", "value2 \"escaped string\""}}));
}

TEST(ParseToolCall, TemplateShippedInSystemPromptParses) {
    const auto& tpl = prompts().get("tool_use_system.txt");
    const auto start = tpl.find("\n<use_mcp_tool>") + 1;
    const auto end = tpl.find("</use_mcp_tool>", start);
    ASSERT_NE(start, std::string::npos);
    const auto inv = parse_tool_call(tpl.substr(start, end + 15 - start));
    ASSERT_TRUE(inv);
    EXPECT_EQ(inv->arguments["param1"], "value1");
}

TEST(ParseToolCall, DocumentedMalformations) {
    try {
        parse_tool_call(block("tool-searching", "search_wiki_revision", R"({"entity": "Outer Wilds"})", ""));
        FAIL();
    } catch (const MalformedCall& e) {
        EXPECT_EQ(e.reason(), "unclosed block");
    }
    try {
        parse_tool_call(block("s", "t", "{bad json"));
        FAIL();
    } catch (const MalformedCall& e) {
        EXPECT_EQ(e.reason(), "invalid arguments");
    }
}

TEST(ParseToolCall, GrammarCorpus) {
    enum class Expect { None, Ok, Malformed, Multiple };
    struct Case {
        std::string text;
        Expect expect;
        std::string detail;  // server/tool for Ok, reason for Malformed
    };
    const std::string ok_block = block("s", "t", R"({"a": 1})");
    const std::vector<Case> corpus = {
        {"plain text answer", Expect::None, ""},
        {"", Expect::None, ""},
        {"Final Answer: \\boxed{4}", Expect::None, ""},
        {"<use_mcp_tool_x> not a block", Expect::None, ""},
        {"mentions use_mcp_tool without brackets", Expect::None, ""},
        {kTemplate, Expect::Ok, "server name here/tool name here"},
        {ok_block, Expect::Ok, "s/t"},
        {"prefix text\n" + ok_block, Expect::Ok, "s/t"},
        {ok_block + "\ntrailing text", Expect::Ok, "s/t"},
        {"<use_mcp_tool><server_name>s</server_name><tool_name>t</tool_name><arguments>{}</arguments></use_mcp_tool>",
         Expect::Ok, "s/t"},
        {"<use_mcp_tool>\n\n  <server_name> s </server_name>\n\t<tool_name> t </tool_name>\n<arguments>{}</arguments>\n\n</use_mcp_tool>",
         Expect::Ok, "s/t"},
        {block("tool-searching", "scripted-search-primary", R"({"query": "Carl Nebel", "num_results": 3})"), Expect::Ok,
         "tool-searching/scripted-search-primary"},
        {block("s", "t", R"({"nested": {"list": [1, 2, {"x": null}]}})"), Expect::Ok, "s/t"},
        {block("s", "t", R"({"text": "contains </arguments> inside"})"), Expect::Malformed, "invalid arguments"},
        {block("s", "t", R"({"text": "unicode é and emoji"})"), Expect::Ok, "s/t"},
        {block("s", "t", R"({"code": "line1\nline2"})"), Expect::Ok, "s/t"},
        {block("agent-browsing", "delegate", R"({"subtask": "find it"})"), Expect::Ok, "agent-browsing/delegate"},
        {block("s", "t", "{}"), Expect::Ok, "s/t"},
        {block("s", "t", "  {\"a\": true}  "), Expect::Ok, "s/t"},
        {block("s", "t", R"({"a": 1})", ""), Expect::Malformed, "unclosed block"},
        {block("s", "t", R"({"a": 1})", "</use_mcp>"), Expect::Malformed, "unclosed block"},
        {block("s", "t", "{bad json"), Expect::Malformed, "invalid arguments"},
        {block("s", "t", "{\"code\": \"a\nb\"}"), Expect::Malformed, "invalid arguments"},
        {block("s", "t", R"(["a", "b"])"), Expect::Malformed, "invalid arguments"},
        {block("s", "t", "42"), Expect::Malformed, "invalid arguments"},
        {block("s", "t", ""), Expect::Malformed, "invalid arguments"},
        {block("s", "t", R"({"a": 1,})"), Expect::Malformed, "invalid arguments"},
        {block("s", "t", R"({'a': 1})"), Expect::Malformed, "invalid arguments"},
        {"<use_mcp_tool>\n<tool_name>t</tool_name>\n<server_name>s</server_name>\n<arguments>{}</arguments>\n</use_mcp_tool>",
         Expect::Malformed, "missing <server_name>"},
        {"<use_mcp_tool>\n<server_name>s</server_name>\n<arguments>{}</arguments>\n</use_mcp_tool>", Expect::Malformed,
         "missing <tool_name>"},
        {"<use_mcp_tool>\n<server_name>s</server_name>\n<tool_name>t</tool_name>\n</use_mcp_tool>", Expect::Malformed,
         "missing <arguments>"},
        {"<use_mcp_tool>\n<server_name>s\n<tool_name>t</tool_name>\n<arguments>{}</arguments>\n</use_mcp_tool>",
         Expect::Malformed, "missing </server_name>"},
        {"<use_mcp_tool>\n<server_name></server_name>\n<tool_name>t</tool_name>\n<arguments>{}</arguments>\n</use_mcp_tool>",
         Expect::Malformed, "empty <server_name>"},
        {"<use_mcp_tool>\n<server_name>s</server_name>\n<tool_name>  </tool_name>\n<arguments>{}</arguments>\n</use_mcp_tool>",
         Expect::Malformed, "empty <tool_name>"},
        {"<use_mcp_tool>\n<server_name>s</server_name>\n<tool_name>t</tool_name>\n<arguments>{}\n</use_mcp_tool>",
         Expect::Malformed, "missing </arguments>"},
        {"<use_mcp_tool>\nstray text<server_name>s</server_name>\n<tool_name>t</tool_name>\n<arguments>{}</arguments>\n</use_mcp_tool>",
         Expect::Malformed, "missing <server_name>"},
        {block("s", "t", R"({"a": 1})", "") + "\n" + ok_block, Expect::Malformed, "unclosed block"},
        {ok_block + "\n" + ok_block, Expect::Multiple, "2"},
        {ok_block + " and " + block("s2", "t2", "{}") + " and " + ok_block, Expect::Multiple, "3"},
        {"Thinking...\n" + ok_block + "\nActually also:\n" + block("x", "y", "{}"), Expect::Multiple, "2"},
    };
    ASSERT_EQ(corpus.size(), 40u);
    int passed = 0;
    for (const auto& c : corpus) {
        std::string got;
        try {
            const auto inv = parse_tool_call(c.text);
            got = inv ? "ok:" + inv->tool_id() : "none";
        } catch (const MalformedCall& e) {
            got = "malformed:" + e.reason();
        } catch (const MultipleCalls& e) {
            got = "multiple:" + std::to_string(e.count());
        }
        std::string want;
        switch (c.expect) {
            case Expect::None: want = "none"; break;
            case Expect::Ok: want = "ok:" + c.detail; break;
            case Expect::Malformed: want = "malformed:" + c.detail; break;
            case Expect::Multiple: want = "multiple:" + c.detail; break;
        }
        EXPECT_EQ(got, want) << c.text;
        passed += got == want;
    }
    EXPECT_EQ(passed, 40);
}

TEST(ParseToolCall, SerializeRoundTripOnGeneratedCalls) {
    std::mt19937_64 rng(77);
    const std::vector<std::string> words = {"alpha", "beta gamma", "quote \" inside", "back\\slash", "new\nline",
                                            "tab\tchar", "<tag>", "</arguments>", "{brace}", "é"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> nfields(0, 4), num(-1000, 1000);
    for (int i = 0; i < 300; ++i) {
        ToolInvocation inv;
        inv.server_name = "server-" + std::to_string(i % 7);
        inv.tool_name = "tool_" + std::to_string(i % 5);
        for (int k = nfields(rng); k > 0; --k) {
            const std::string key = "f" + std::to_string(k);
            switch (k % 3) {
                case 0: inv.arguments[key] = words[pick(rng)]; break;
                case 1: inv.arguments[key] = num(rng); break;
                default: inv.arguments[key] = json::array({words[pick(rng)], num(rng)}); break;
            }
        }
        const auto text = serialize_tool_call(inv);
        std::optional<ToolInvocation> parsed;
        try {
            parsed = parse_tool_call(text);
        } catch (const MalformedCall&) {
            // Argument strings that contain the closing tag cannot round-trip.
            EXPECT_NE(inv.arguments.dump().find("</arguments>"), std::string::npos) << text;
            continue;
        }
        ASSERT_TRUE(parsed);
        EXPECT_TRUE(parsed->same_call(inv)) << text;
        EXPECT_TRUE(parse_tool_call(serialize_tool_call(*parsed))->same_call(inv));
    }
}

TEST(ValidateArguments, MissingRequiredFieldIsNamed) {
    const auto fault = validate_arguments(upload_contract(),
                                          call("tool-code/upload_file_to_sandbox",
                                               {{"sandbox_id", "sbx"}, {"sandbox_path", "/sandbox/a.py"}}));
    ASSERT_TRUE(fault);
    EXPECT_EQ(fault->fault_type, FaultType::InvalidArguments);
    EXPECT_NE(fault->summary.find("local_path"), std::string::npos);
}

TEST(ValidateArguments, ConformingCallIsOk) {
    EXPECT_FALSE(validate_arguments(upload_contract(),
                                    call("tool-code/upload_file_to_sandbox",
                                         {{"sandbox_id", "sbx"}, {"local_path", "a.py"}, {"sandbox_path", "/s/a.py"}})));
}

TEST(ValidateArguments, TypeMismatchIsNamed) {
    ToolContract c = simple_contract("t/count");
    c.input_schema = {{"n", FieldType::Integer, true, ""}};
    const auto fault = validate_arguments(c, call("t/count", {{"n", "7"}}));
    ASSERT_TRUE(fault);
    EXPECT_EQ(fault->fault_type, FaultType::InvalidArguments);
    EXPECT_NE(fault->summary.find("'n' expects integer but got string"), std::string::npos);
    EXPECT_FALSE(validate_arguments(c, call("t/count", {{"n", 7}})));
    EXPECT_TRUE(validate_arguments(c, call("t/count", {{"n", 7}, {"extra", 1}})));
}

TEST(ValidateArguments, OkImpliesIndependentSchemaWalkerAccepts) {
    ToolContract c;
    c.server_name = "s";
    c.tool_name = "t";
    c.input_schema = {{"a", FieldType::String, true, ""},  {"b", FieldType::Integer, false, ""},
                      {"c", FieldType::Number, true, ""},  {"d", FieldType::Boolean, false, ""},
                      {"e", FieldType::List, false, ""},   {"f", FieldType::Object, false, ""}};
    const std::vector<json> values = {"x", 3, 2.5, true, json::array({1}), json::object(), nullptr};
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::bernoulli_distribution present(0.6);
    const auto walker_ok = [&](const json& args) {
        for (const auto& f : c.input_schema) {
            if (!args.contains(f.name)) {
                if (f.required) return false;
                continue;
            }
            const auto& v = args[f.name];
            bool type_ok = false;
            switch (f.type) {
                case FieldType::String: type_ok = v.is_string(); break;
                case FieldType::Integer: type_ok = v.is_number_integer(); break;
                case FieldType::Number: type_ok = v.is_number(); break;
                case FieldType::Boolean: type_ok = v.is_boolean(); break;
                case FieldType::List: type_ok = v.is_array(); break;
                case FieldType::Object: type_ok = v.is_object(); break;
            }
            if (!type_ok) return false;
        }
        return true;
    };
    int accepted = 0;
    for (int i = 0; i < 2000; ++i) {
        json args = json::object();
        for (const auto& f : c.input_schema) {
            if (present(rng)) args[f.name] = values[pick(rng)];
        }
        const bool ok = !validate_arguments(c, call("s/t", args));
        if (ok) {
            ++accepted;
            EXPECT_TRUE(walker_ok(args)) << args.dump();
        }
        EXPECT_EQ(ok, walker_ok(args)) << args.dump();
    }
    EXPECT_GT(accepted, 0);
}

TEST(InvokeTool, EchoIdentity) {
    ToolRegistry r;
    register_builtin_stubs(r);
    const auto out = invoke_tool(r, call("tool-basic/echo", {{"text", "hi"}}), fast_retry());
    ASSERT_TRUE(out.is_ok());
    EXPECT_EQ(out.payload, "hi");
}

TEST(InvokeTool, TransientPrimaryFallsBackInDeclarationOrder) {
    ToolRegistry r;
    int primary_calls = 0;
    r.add(simple_contract("search/primary", {"search/second", "search/third"}), [&](const json&) -> std::string {
        ++primary_calls;
        throw ToolFailure(FailureClass::TransientNetwork, "Failed to resolve host");
    });
    r.add(simple_contract("search/second"), [](const json&) -> std::string {
        throw ToolFailure(FailureClass::Timeout, "Read timed out");
    });
    r.add(simple_contract("search/third"), [](const json& a) { return "third:" + a["query"].get<std::string>(); });
    RunLog log;
    const auto out = invoke_tool(r, call("search/primary", {{"query", "q"}}), fast_retry(), &log, "main");
    ASSERT_TRUE(out.is_ok());
    EXPECT_EQ(out.payload, "third:q");
    EXPECT_EQ(primary_calls, 3);
    const auto k = kinds(log);
    const std::vector<EventKind> expected = {
        EventKind::ToolAttempt, EventKind::Retry,    EventKind::ToolAttempt, EventKind::Retry,
        EventKind::ToolAttempt, EventKind::Fallback, EventKind::ToolAttempt, EventKind::Retry,
        EventKind::ToolAttempt, EventKind::Retry,    EventKind::ToolAttempt, EventKind::Fallback,
        EventKind::ToolAttempt};
    EXPECT_EQ(k, expected);
    std::vector<std::string> order;
    for (const auto& e : log.entries()) {
        if (e.kind == EventKind::Fallback) order.push_back(e.payload["to"].get<std::string>());
    }
    EXPECT_EQ(order, (std::vector<std::string>{"search/second", "search/third"}));
}

TEST(InvokeTool, BuiltinSearchFallbackUnderPersistentFailure) {
    ToolRegistry r;
    BuiltinToolOptions opts;
    opts.corpus = std::make_shared<SearchCorpus>(SearchCorpus::load(fixture("corpus/golden.json")));
    register_builtin_stubs(r, opts);
    r.replace_impl("tool-searching/scripted-search-primary", [](const json&) -> std::string {
        throw ToolFailure(FailureClass::TransientNetwork, "Max retries exceeded... Failed to resolve");
    });
    RunLog log;
    const auto out = invoke_tool(r, call("tool-searching/scripted-search-primary", {{"query", "Carl Nebel Rancheros image dates"}}),
                                 fast_retry(), &log, "main");
    ASSERT_TRUE(out.is_ok());
    EXPECT_NE(out.payload.find("1927"), std::string::npos);
    EXPECT_EQ(json::parse(out.payload)["source"], "backup");
}

TEST(InvokeTool, UnknownToolIsUnavailable) {
    ToolRegistry r;
    const auto out = invoke_tool(r, call("nope/nothing", {}), fast_retry());
    ASSERT_FALSE(out.is_ok());
    EXPECT_EQ(out.fault->fault_type, FaultType::ToolUnavailable);
}

TEST(InvokeTool, NoExceptionCrossesTheBoundary) {
    ToolRegistry r;
    std::mt19937_64 rng(4);
    r.add(simple_contract("fuzz/tool"), [&](const json& a) -> std::string {
        switch (a["query"].get<std::string>()[0]) {
            case 'a': throw std::runtime_error("boom");
            case 'b': throw 42;
            case 'c': throw ToolFailure(FailureClass::Permanent, "denied");
            case 'd': throw std::logic_error("Connection reset by peer");
            case 'e': throw std::bad_alloc();
            default: return "fine";
        }
    });
    for (const std::string q : {"a", "b", "c", "d", "e", "f"}) {
        ToolOutcome out;
        EXPECT_NO_THROW(out = invoke_tool(r, call("fuzz/tool", {{"query", q}}), fast_retry()));
        EXPECT_EQ(out.is_ok(), q == "f") << q;
        if (!out.is_ok()) EXPECT_TRUE(out.fault.has_value());
    }
}

TEST(InvokeTool, TimeoutIsClassified) {
    ToolRegistry r;
    r.timeout = std::chrono::milliseconds(50);
    r.add(simple_contract("slow/tool"), [](const json&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(300));
        return std::string("late");
    });
    RunLog log;
    const auto out = invoke_tool(r, call("slow/tool", {{"query", "q"}}), fast_retry(1), &log);
    ASSERT_FALSE(out.is_ok());
    EXPECT_EQ(out.fault->fault_type, FaultType::TransientFailure);
    EXPECT_EQ(log.entries().front().payload["outcome"], "timeout");
}

TEST(InvokeTool, IncompatibleFallbackIsSkipped) {
    ToolRegistry r;
    r.add(simple_contract("a/primary", {"a/other"}), [](const json&) -> std::string {
        throw ToolFailure(FailureClass::TransientNetwork, "connection refused");
    });
    ToolContract other = simple_contract("a/other");
    other.input_schema.push_back({"page", FieldType::Integer, true, ""});
    r.add(other, [](const json&) { return std::string("should not run"); });
    RunLog log;
    const auto out = invoke_tool(r, call("a/primary", {{"query", "q"}}), fast_retry(1), &log);
    ASSERT_FALSE(out.is_ok());
    bool skipped = false;
    for (const auto& e : log.entries()) {
        if (e.kind == EventKind::Fallback) skipped = e.payload.value("skipped", "") == "incompatible input schema";
    }
    EXPECT_TRUE(skipped);
}

TEST(IsolateFault, UnclosedTagSummaryInstructsReemission) {
    const auto a = malformed_call_artifact(MalformedCall("unclosed block"), "raw");
    EXPECT_EQ(a.fault_type, FaultType::MalformedCall);
    EXPECT_NE(a.summary.find("closing tag </use_mcp_tool> is missing"), std::string::npos);
    EXPECT_NE(a.summary.find("not a data access failure"), std::string::npos);
    EXPECT_NE(a.summary.find("Re-emit"), std::string::npos);
}

TEST(IsolateFault, FileNotFoundNamesTheUploadStep) {
    const auto a = isolate_fault(
        {FailureClass::Permanent, "python3: can't open file '/sandbox/audit_log_parser.py': [Errno 2] No such file or directory"},
        call("tool-code/run_python_file", {{"path", "/sandbox/audit_log_parser.py"}}));
    EXPECT_EQ(a.fault_type, FaultType::InvalidArguments);
    EXPECT_NE(a.summary.find("upload"), std::string::npos);
    EXPECT_NE(a.summary.find("/sandbox/audit_log_parser.py"), std::string::npos);
}

TEST(IsolateFault, BudgetSummaryStatesKindAndLimit) {
    const auto a = budget_exceeded_artifact("spawned-agents", 2, {"agent-browsing", ""});
    EXPECT_EQ(a.fault_type, FaultType::BudgetExceeded);
    EXPECT_NE(a.summary.find("spawned-agents"), std::string::npos);
    EXPECT_NE(a.summary.find("limit 2"), std::string::npos);
}

TEST(IsolateFault, ClassesMapToTypesDeterministically) {
    const auto inv = call("s/t", {{"query", "q"}});
    EXPECT_EQ(isolate_fault({FailureClass::TransientNetwork, "dns"}, inv).fault_type, FaultType::TransientFailure);
    EXPECT_EQ(isolate_fault({FailureClass::RateLimit, "429"}, inv).fault_type, FaultType::TransientFailure);
    EXPECT_EQ(isolate_fault({FailureClass::Permanent, "403: Forbidden"}, inv).fault_type, FaultType::PermanentFailure);
    EXPECT_EQ(isolate_fault({FailureClass::Permanent,
                             "Error parsing tool arguments: JSONDecodeError: Invalid control character"},
                            inv)
                  .fault_type,
              FaultType::MalformedCall);
    const auto a = isolate_fault({FailureClass::Timeout, std::string(5000, 'x')}, inv);
    EXPECT_LE(a.summary.size(), kMaxFaultSummaryChars);
    EXPECT_EQ(a, isolate_fault({FailureClass::Timeout, std::string(5000, 'x')}, inv));
    EXPECT_NE(a.summary.find("Remedy:"), std::string::npos);
}

TEST(Builtins, FiveContractsAndDuplicateRejected) {
    ToolRegistry r;
    register_builtin_stubs(r);
    EXPECT_EQ(r.size(), 5u);
    EXPECT_THROW(register_builtin_stubs(r), DuplicateToolError);
}

TEST(Builtins, ScriptedSearchReturnsCannedCorpusResult) {
    ToolRegistry r;
    BuiltinToolOptions opts;
    opts.corpus = std::make_shared<SearchCorpus>(SearchCorpus::load(fixture("corpus/golden.json")));
    register_builtin_stubs(r, opts);
    const auto out = invoke_tool(r, call("tool-searching/scripted-search-primary",
                                         {{"query", "  carl nebel WIKIPEDIA citation image year "}}),
                                 fast_retry());
    ASSERT_TRUE(out.is_ok());
    const auto doc = json::parse(out.payload);
    EXPECT_EQ(doc["results"][0]["title"], "Carl Nebel - Wikipedia");
    const auto none = invoke_tool(r, call("tool-searching/scripted-search-primary", {{"query", "unknown"}}), fast_retry());
    ASSERT_TRUE(none.is_ok());
    EXPECT_NE(none.payload.find("No results found"), std::string::npos);
}

TEST(Builtins, ArithmeticAndFileRead) {
    EXPECT_DOUBLE_EQ(evaluate_arithmetic("2 + 3 * (4 - 1) ^ 2"), 29.0);
    EXPECT_EQ(format_number(evaluate_arithmetic("10 / 4")), "2.5");
    EXPECT_THROW(evaluate_arithmetic("2 +"), Error);
    ToolRegistry r;
    BuiltinToolOptions opts;
    opts.sandbox_dir = fixture("sandbox/grocery");
    register_builtin_stubs(r, opts);
    const auto out = invoke_tool(r, call("tool-reader/file-read", {{"path", "grocery_list.txt"}}), fast_retry());
    ASSERT_TRUE(out.is_ok());
    EXPECT_NE(out.payload.find("sweet potatoes"), std::string::npos);
    const auto escape = invoke_tool(r, call("tool-reader/file-read", {{"path", "../../backends/golden.json"}}), fast_retry());
    EXPECT_FALSE(escape.is_ok());
}

TEST(ToolManifest, CannedKeyedAndFailingEntries) {
    TempDir dir("manifest");
    const json manifest = json::parse(R"({
        "builtins": false,
        "tools": [
            {"server_name": "kv", "tool_name": "lookup",
             "input_schema": [{"name": "key", "type": "string"}],
             "impl": {"kind": "canned", "key": "key", "responses": {"alpha": "A"}, "default": "?"}},
            {"server_name": "kv", "tool_name": "deny", "input_schema": [],
             "impl": {"kind": "canned", "fail": "Target URL returned error 403: Forbidden", "status": 403}}
        ]})");
    write_file_atomic(dir.path() / "tools.json", manifest.dump());
    ToolRegistry r;
    load_tool_manifest(dir.path() / "tools.json", r);
    EXPECT_EQ(r.size(), 2u);
    EXPECT_EQ(invoke_tool(r, call("kv/lookup", {{"key", " Alpha "}}), fast_retry()).payload, "A");
    EXPECT_EQ(invoke_tool(r, call("kv/lookup", {{"key", "beta"}}), fast_retry()).payload, "?");
    const auto denied = invoke_tool(r, call("kv/deny", json::object()), fast_retry());
    ASSERT_FALSE(denied.is_ok());
    EXPECT_EQ(denied.fault->fault_type, FaultType::PermanentFailure);
}

TEST(ToolManifest, SubprocessAdapterSpeaksJsonLines) {
    TempDir dir("subprocess");
    const auto script = dir.path() / "tool.sh";
    write_file_atomic(script,
                      "#!/bin/sh\nread line\ncase \"$line\" in\n"
                      "  *fail*) echo '{\"ok\": false, \"error\": \"429 Too Many Requests\"}' ;;\n"
                      "  *) echo '{\"ok\": true, \"payload\": \"pong\"}' ;;\nesac\n");
    std::filesystem::permissions(script, std::filesystem::perms::owner_all);
    ToolRegistry r;
    r.add(simple_contract("proc/ping"), subprocess_tool({script.string()}, "proc/ping"), false);
    EXPECT_EQ(invoke_tool(r, call("proc/ping", {{"query", "hello"}}), fast_retry()).payload, "pong");
    RunLog log;
    const auto failed = invoke_tool(r, call("proc/ping", {{"query", "fail"}}), fast_retry(2), &log);
    ASSERT_FALSE(failed.is_ok());
    EXPECT_EQ(failed.fault->fault_type, FaultType::TransientFailure);
    EXPECT_EQ(log.entries().front().payload["outcome"], "rate-limit");
}
