#include "agentflow/answer.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <vector>

namespace agentflow {

std::optional<std::string> extract_boxed_answer(std::string_view text) {
    static constexpr std::string_view kOpen = "\\boxed{";
    std::optional<std::string> last;
    std::size_t pos = 0;
    while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
        const std::size_t body = pos + kOpen.size();
        int depth = 1;
        std::size_t i = body;
        for (; i < text.size(); ++i) {
            if (text[i] == '{') {
                ++depth;
            } else if (text[i] == '}' && --depth == 0) {
                break;
            }
        }
        if (depth == 0) {
            last = std::string(text.substr(body, i - body));
            pos = i + 1;  // skip nested boxes: only outermost groups count
        } else {
            ++pos;  // unbalanced opener; a later box may still balance
        }
    }
    return last;
}

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string strip_trailing(std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
    return s;
}

std::string base_normalize(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    bool pending_space = false;
    for (char c : in) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return strip_trailing(std::move(out));
}

std::string strip_separators(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && !out.empty() && is_digit(out.back()) && i + 1 < s.size() &&
            is_digit(s[i + 1])) {
            continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

std::string strip_leading_zeros(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool run_start = is_digit(s[i]) && (out.empty() || (!is_digit(out.back()) && out.back() != '.'));
        if (run_start && s[i] == '0') {
            std::size_t j = i;
            while (j < s.size() && s[j] == '0') ++j;
            if (j < s.size() && is_digit(s[j])) {
                i = j - 1;  // drop the zeros; the next digit starts the number
                continue;
            }
            // Run of zeros ending the number (or before '.'): keep exactly one.
            out.push_back('0');
            i = j - 1;
            continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

std::vector<std::string> split_items(std::string_view s) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string_view::npos) comma = s.size();
        std::string item(s.substr(start, comma - start));
        std::string cleaned;
        do {
            cleaned = item;
            item = strip_trailing(trim(item));
        } while (item != cleaned);
        if (!item.empty()) items.push_back(item);
        start = comma + 1;
    }
    return items;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

}  // namespace

std::string canonicalize_answer(std::string_view answer, std::optional<AnswerFormat> format) {
    std::string s = base_normalize(answer);
    if (!format) return s;
    switch (*format) {
        case AnswerFormat::Text:
            return s;
        case AnswerFormat::Integer:
        case AnswerFormat::Number:
            return strip_leading_zeros(strip_separators(s));
        case AnswerFormat::List:
            return join(split_items(s));
        case AnswerFormat::UnorderedList: {
            auto items = split_items(s);
            std::sort(items.begin(), items.end());
            return join(items);
        }
    }
    return s;
}

std::optional<std::string> conform_to_format(std::string_view answer, AnswerFormat format) {
    std::string s = trim(answer);
    switch (format) {
        case AnswerFormat::Text:
            return s;
        case AnswerFormat::Integer:
        case AnswerFormat::Number: {
            std::string n = strip_leading_zeros(strip_separators(s));
            while (!n.empty() && n.back() == '.') n.pop_back();
            static const std::regex kInteger(R"([+-]?\d+)");
            static const std::regex kNumber(R"([+-]?\d+(\.\d+)?)");
            const auto& pattern = format == AnswerFormat::Integer ? kInteger : kNumber;
            if (!std::regex_match(n, pattern)) return std::nullopt;
            return n;
        }
        case AnswerFormat::List:
        case AnswerFormat::UnorderedList: {
            std::vector<std::string> items;
            std::size_t start = 0;
            while (start <= s.size()) {
                std::size_t comma = s.find(',', start);
                if (comma == std::string::npos) comma = s.size();
                std::string item = trim(std::string_view(s).substr(start, comma - start));
                if (!item.empty()) items.push_back(item);
                start = comma + 1;
            }
            if (items.empty()) return std::nullopt;
            return join(items);
        }
    }
    return s;
}

}  // namespace agentflow
