#include "agentflow/prompts.hpp"

#include <cstdlib>

#include "agentflow/errors.hpp"
#include "agentflow/util.hpp"

#ifndef AGENTFLOW_DEFAULT_RESOURCES
#define AGENTFLOW_DEFAULT_RESOURCES "resources"
#endif

namespace agentflow {

PromptLibrary PromptLibrary::load(const std::filesystem::path& resources_dir) {
    PromptLibrary lib;
    lib.root_ = resources_dir / "prompts";
    std::error_code ec;
    if (!std::filesystem::is_directory(lib.root_, ec)) {
        throw ConfigError("prompt directory '" + lib.root_.string() + "' does not exist");
    }
    for (const auto& entry : std::filesystem::recursive_directory_iterator(lib.root_)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        const auto rel = entry.path().lexically_relative(lib.root_).generic_string();
        lib.files_[rel] = read_file(entry.path());
    }
    return lib;
}

const std::string& PromptLibrary::get(std::string_view name) const {
    auto it = files_.find(name);
    if (it == files_.end()) throw ConfigError("missing prompt resource '" + std::string(name) + "'");
    return it->second;
}

bool PromptLibrary::contains(std::string_view name) const { return files_.find(name) != files_.end(); }

std::string PromptLibrary::variant(std::string_view id) const {
    if (id.empty() || id == "default") return {};
    const std::string name = "variants/" + std::string(id) + ".txt";
    if (!contains(name)) throw ConfigError("unknown prompt variant '" + std::string(id) + "'");
    return get(name);
}

std::map<std::string, std::string> PromptLibrary::hashes() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, content] : files_) out[name] = sha256_hex(content);
    return out;
}

void PromptLibrary::set(std::string name, std::string content) { files_[std::move(name)] = std::move(content); }

std::filesystem::path resolve_resources_dir(const std::optional<std::filesystem::path>& explicit_dir) {
    if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
    const char* env = std::getenv("AGENTFLOW_RESOURCES");
    if (env != nullptr && *env != '\0') return env;
    return AGENTFLOW_DEFAULT_RESOURCES;
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const auto open = tpl.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        out.append(tpl.substr(pos, open - pos));
        const auto close = tpl.find('}', open + 1);
        if (close != std::string_view::npos) {
            auto it = vars.find(std::string(tpl.substr(open + 1, close - open - 1)));
            if (it != vars.end()) {
                out += it->second;
                pos = close + 1;
                continue;
            }
        }
        out += '{';
        pos = open + 1;
    }
    return out;
}

}  // namespace agentflow
