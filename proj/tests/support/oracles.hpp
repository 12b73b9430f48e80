#pragma once

// Reference implementations written independently of the library, used as
// oracles by the property tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace agentflow::testing::oracle {

// Every balanced \boxed{...} group as (start, body); outermost groups are
// those not lying inside another balanced group. Returns the body of the
// outermost group that starts last.
inline std::optional<std::string> boxed(const std::string& text) {
    const std::string open = "\\boxed{";
    struct Group {
        std::size_t start, end;  // [start, end] covers "\boxed{" ... "}"
        std::string body;
    };
    std::vector<Group> groups;
    for (std::size_t s = 0; s + open.size() <= text.size(); ++s) {
        if (text.compare(s, open.size(), open) != 0) continue;
        int depth = 0;
        for (std::size_t e = s + open.size() - 1; e < text.size(); ++e) {
            if (text[e] == '{') ++depth;
            if (text[e] == '}') --depth;
            if (depth == 0) {
                groups.push_back({s, e, text.substr(s + open.size(), e - s - open.size())});
                break;
            }
        }
    }
    std::optional<std::string> best;
    std::size_t best_start = 0;
    for (const auto& g : groups) {
        bool inside = false;
        for (const auto& h : groups) {
            if (&h != &g && h.start < g.start && g.end <= h.end) inside = true;
        }
        if (!inside && (!best || g.start >= best_start)) {
            best = g.body;
            best_start = g.start;
        }
    }
    return best;
}

inline std::string lower_collapse(const std::string& in) {
    std::string s = std::regex_replace(in, std::regex(R"(\s+)"), " ");
    s = std::regex_replace(s, std::regex(R"(^ +)"), "");
    s = std::regex_replace(s, std::regex(R"([ .]+$)"), "");
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string numeric(const std::string& in) {
    std::string s = lower_collapse(in);
    s = std::regex_replace(s, std::regex(R"((\d),(?=\d))"), "$1");
    s = std::regex_replace(s, std::regex(R"((^|[^\d.])0+(?=\d))"), "$1");
    return s;
}

inline std::vector<std::string> items(const std::string& in) {
    std::vector<std::string> out;
    std::stringstream ss(lower_collapse(in));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = std::regex_replace(item, std::regex(R"(^\s+)"), "");
        item = std::regex_replace(item, std::regex(R"([\s.]+$)"), "");
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string joined(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& x : v) out += (out.empty() ? "" : ", ") + x;
    return out;
}

// format: "", "integer", "number", "list", "unordered-list"
inline std::string canonical(const std::string& in, const std::string& format) {
    if (format == "integer" || format == "number") return numeric(in);
    if (format == "list") return joined(items(in));
    if (format == "unordered-list") {
        auto v = items(in);
        std::sort(v.begin(), v.end());
        return joined(v);
    }
    return lower_collapse(in);
}

struct Ballot {
    std::string answer;  // already canonical
    double weight;
    bool ok;
};

struct Tally {
    std::string winner;
    std::map<std::string, double> totals;
    bool tie;
};

// Exhaustive recomputation: every distinct answer is summed by a full scan.
inline Tally tally(const std::vector<Ballot>& ballots, bool weighted) {
    Tally t{{}, {}, false};
    std::vector<std::string> distinct;
    for (const auto& b : ballots) {
        if (b.ok && std::find(distinct.begin(), distinct.end(), b.answer) == distinct.end()) distinct.push_back(b.answer);
    }
    for (const auto& a : distinct) {
        double sum = 0;
        for (const auto& b : ballots) {
            if (b.ok && b.answer == a) sum += weighted ? b.weight : 1.0;
        }
        t.totals[a] = sum;
    }
    double best = -1;
    for (const auto& [a, s] : t.totals) best = std::max(best, s);
    const auto near = [&](double s) { return std::fabs(s - best) <= 1e-9 * std::max(1.0, std::fabs(best)); };
    int tied = 0;
    for (const auto& [a, s] : t.totals) tied += near(s);
    t.tie = tied > 1;
    // distinct is in order of first appearance, so the first maximal entry
    // has the lowest declaration index.
    for (const auto& a : distinct) {
        if (near(t.totals[a])) {
            t.winner = a;
            break;
        }
    }
    return t;
}

// Transitive closure by Warshall's algorithm; true iff some node reaches itself.
inline bool has_cycle(const std::vector<std::vector<int>>& adjacency) {
    const std::size_t n = adjacency.size();
    std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (int j : adjacency[i]) r[i][static_cast<std::size_t>(j)] = true;
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!r[i][k]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (r[k][j]) r[i][j] = true;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (r[i][i]) return true;
    }
    return false;
}

}  // namespace agentflow::testing::oracle
