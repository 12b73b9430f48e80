#include "agentflow/util.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include <unistd.h>

#include "agentflow/errors.hpp"

namespace agentflow {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, digest, &length);
    EVP_MD_CTX_free(ctx);

    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0x0f]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw StorageError("cannot create directory '" + path.parent_path().string() +
                               "': " + ec.message());
        }
    }
    const auto tmp = path.string() + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (f == nullptr) throw StorageError("cannot open '" + tmp + "' for writing");
    const bool written = std::fwrite(content.data(), 1, content.size(), f) == content.size() &&
                         std::fflush(f) == 0 && ::fsync(::fileno(f)) == 0;
    std::fclose(f);
    if (!written) {
        std::filesystem::remove(tmp, ec);
        throw StorageError("short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw StorageError("cannot rename into '" + path.string() + "'");
    }
}

namespace {

void line_column(std::string_view text, std::size_t byte, std::size_t& line, std::size_t& column) {
    line = 1;
    column = 1;
    const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
}

}  // namespace

ordered_json parse_json_document(std::string_view text) {
    std::vector<std::set<std::string>> keys;
    std::string duplicate;
    auto callback = [&](int /*depth*/, ordered_json::parse_event_t event, ordered_json& parsed) {
        using E = ordered_json::parse_event_t;
        switch (event) {
            case E::object_start:
                keys.emplace_back();
                break;
            case E::object_end:
                if (!keys.empty()) keys.pop_back();
                break;
            case E::key:
                if (!keys.empty() && !keys.back().insert(parsed.get<std::string>()).second &&
                    duplicate.empty()) {
                    duplicate = parsed.get<std::string>();
                }
                break;
            default:
                break;
        }
        return true;
    };
    try {
        auto doc = ordered_json::parse(text.begin(), text.end(), callback);
        if (!duplicate.empty()) throw SyntaxError("duplicate key '" + duplicate + "'", 0, 0);
        return doc;
    } catch (const ordered_json::parse_error& e) {
        std::size_t line = 0, column = 0;
        line_column(text, e.byte, line, column);
        std::string what = e.what();
        // nlohmann prefixes "[json.exception.parse_error.101] parse error at line ..., column ...: "
        if (auto pos = what.find(": "); pos != std::string::npos) what = what.substr(pos + 2);
        throw SyntaxError(what, line, column);
    }
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string truncate_text(std::string_view s, std::size_t max_chars) {
    if (s.size() <= max_chars) return std::string(s);
    static constexpr std::string_view kMarker = " ...[truncated]";
    const std::size_t keep = max_chars > kMarker.size() ? max_chars - kMarker.size() : 0;
    return std::string(s.substr(0, keep)) + std::string(kMarker);
}

}  // namespace agentflow
