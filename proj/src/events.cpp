#include "agentflow/events.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "agentflow/errors.hpp"

namespace agentflow {

namespace {

const std::vector<std::pair<EventKind, std::string_view>>& kind_names() {
    static const std::vector<std::pair<EventKind, std::string_view>> names = {
        {EventKind::Turn, "turn"},
        {EventKind::ToolAttempt, "tool-attempt"},
        {EventKind::Retry, "retry"},
        {EventKind::Fallback, "fallback"},
        {EventKind::Fault, "fault"},
        {EventKind::Delegation, "delegation"},
        {EventKind::EnsembleMember, "ensemble-member"},
        {EventKind::VerificationRound, "verification-round"},
        {EventKind::Checkpoint, "checkpoint"},
        {EventKind::Budget, "budget"},
    };
    return names;
}

}  // namespace

std::string_view to_string(EventKind k) {
    for (const auto& [kind, name] : kind_names()) {
        if (kind == k) return name;
    }
    return "turn";
}

std::optional<EventKind> event_kind_from_string(std::string_view s) {
    for (const auto& [kind, name] : kind_names()) {
        if (name == s) return kind;
    }
    return std::nullopt;
}

const std::vector<EventKind>& all_event_kinds() {
    static const std::vector<EventKind> kinds = [] {
        std::vector<EventKind> out;
        for (const auto& [kind, _] : kind_names()) out.push_back(kind);
        return out;
    }();
    return kinds;
}

std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

json to_json(const EventLogEntry& e) {
    return {{"sequence", e.sequence},   {"timestamp", e.timestamp},
            {"kind", to_string(e.kind)}, {"node_id", e.node_id},
            {"payload_digest", e.payload_digest}, {"payload", e.payload},
            {"timing", e.timing}};
}

EventLogEntry event_entry_from_json(const json& j) {
    EventLogEntry e;
    e.sequence = j.at("sequence").get<std::uint64_t>();
    e.timestamp = j.value("timestamp", "");
    const auto kind = event_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw SchemaError("unknown event kind '" + j.at("kind").get<std::string>() + "'");
    e.kind = *kind;
    e.node_id = j.value("node_id", "");
    e.payload_digest = j.value("payload_digest", "");
    e.payload = j.value("payload", json::object());
    e.timing = j.contains("timing") ? j.at("timing") : json(nullptr);
    return e;
}

RunLog::RunLog(const std::filesystem::path& path) : path_(path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw StorageError("cannot open event log '" + path.string() + "'");
}

RunLog::RunLog(RunLog&& other) noexcept
    : entries_(std::move(other.entries_)), out_(std::move(other.out_)), path_(std::move(other.path_)) {}

RunLog RunLog::resume(const std::filesystem::path& path, std::uint64_t high_water_mark) {
    std::vector<EventLogEntry> kept;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::string line;
        while (kept.size() < high_water_mark && std::getline(in, line)) {
            if (line.empty()) continue;
            auto entry = event_entry_from_json(json::parse(line));
            if (entry.sequence != kept.size() + 1) throw LogCorrupt(kept.size() + 1, "sequence gap");
            kept.push_back(std::move(entry));
        }
    }
    if (kept.size() != high_water_mark) throw LogCorrupt(kept.size() + 1, "log shorter than checkpoint");

    std::string prefix;
    for (const auto& e : kept) prefix += to_json(e).dump() + "\n";
    write_file_atomic(path, prefix);

    RunLog log;
    log.path_ = path;
    log.entries_ = std::move(kept);
    log.out_.open(path, std::ios::binary | std::ios::app);
    if (!log.out_) throw StorageError("cannot reopen event log '" + path.string() + "'");
    return log;
}

void RunLog::emit(EventKind kind, std::string node_id, json payload, json timing) {
    std::lock_guard lock(mutex_);
    EventLogEntry e;
    e.sequence = entries_.size() + 1;
    e.timestamp = utc_timestamp_now();
    e.kind = kind;
    e.node_id = std::move(node_id);
    e.payload = std::move(payload);
    e.payload_digest = sha256_hex(e.payload.dump());
    e.timing = std::move(timing);
    if (out_.is_open()) {
        out_ << to_json(e).dump() << '\n';
        out_.flush();
        if (!out_) throw StorageError("write to event log '" + path_.string() + "' failed");
    }
    entries_.push_back(std::move(e));
}

std::vector<EventLogEntry> RunLog::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::uint64_t RunLog::high_water_mark() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void BufferedSink::emit(EventKind kind, std::string node_id, json payload, json timing) {
    std::lock_guard lock(mutex_);
    pending_.push_back({kind, std::move(node_id), std::move(payload), std::move(timing)});
}

void BufferedSink::flush_into(EventSink& target) {
    std::vector<Pending> drained;
    {
        std::lock_guard lock(mutex_);
        drained.swap(pending_);
    }
    for (auto& p : drained) {
        target.emit(p.kind, std::move(p.node_id), std::move(p.payload), std::move(p.timing));
    }
}

std::size_t BufferedSink::size() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
}

std::vector<EventLogEntry> read_event_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open event log '" + path.string() + "'");
    std::vector<EventLogEntry> entries;
    std::string line;
    std::uint64_t expected = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EventLogEntry e;
        try {
            e = event_entry_from_json(json::parse(line));
        } catch (const std::exception& ex) {
            throw LogCorrupt(expected, std::string("unreadable entry: ") + ex.what());
        }
        if (e.sequence != expected) throw LogCorrupt(expected, "sequence gap");
        if (sha256_hex(e.payload.dump()) != e.payload_digest) {
            throw LogCorrupt(expected, "payload digest mismatch");
        }
        entries.push_back(std::move(e));
        ++expected;
    }
    return entries;
}

std::string event_log_digest(const std::vector<EventLogEntry>& entries) {
    std::string material;
    for (const auto& e : entries) {
        json j = to_json(e);
        j.erase("timestamp");
        j.erase("timing");
        material += j.dump();
        material += '\n';
    }
    return sha256_hex(material);
}

}  // namespace agentflow
