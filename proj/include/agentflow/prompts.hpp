#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace agentflow {

// Versioned prompt resources loaded from <resources>/prompts. Every file
// takes part in the manifest hash map, keyed by its path relative to the
// prompts directory ("normalize.txt", "variants/concise.txt", ...).
class PromptLibrary {
public:
    PromptLibrary() = default;
    static PromptLibrary load(const std::filesystem::path& resources_dir);

    // Throws ConfigError for a missing resource.
    const std::string& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    // Text appended to a node prompt for an ensemble prompt variant.
    // "default" and "" map to no text; unknown ids raise ConfigError.
    std::string variant(std::string_view id) const;

    std::map<std::string, std::string> hashes() const;
    const std::filesystem::path& root() const { return root_; }

    // For tests: install or override a resource in memory.
    void set(std::string name, std::string content);

private:
    std::filesystem::path root_;
    std::map<std::string, std::string, std::less<>> files_;
};

// Resolution order: explicit path, AGENTFLOW_RESOURCES, compiled-in default.
std::filesystem::path resolve_resources_dir(const std::optional<std::filesystem::path>& explicit_dir = std::nullopt);

// Replaces {name} placeholders; unknown placeholders are left untouched.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& vars);

}  // namespace agentflow
