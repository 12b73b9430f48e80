#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentflow/util.hpp"

namespace agentflow {

// Closed set of event kinds.
enum class EventKind {
    Turn,
    ToolAttempt,
    Retry,
    Fallback,
    Fault,
    Delegation,
    EnsembleMember,
    VerificationRound,
    Checkpoint,
    Budget,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(std::string_view s);
const std::vector<EventKind>& all_event_kinds();

struct EventLogEntry {
    std::uint64_t sequence = 0;
    std::string timestamp;  // ISO-8601 UTC
    EventKind kind = EventKind::Turn;
    std::string node_id;
    std::string payload_digest;  // sha256 of payload.dump()
    json payload = json::object();
    json timing;  // wall-clock measurements; excluded from comparison digests
};

json to_json(const EventLogEntry& e);
EventLogEntry event_entry_from_json(const json& j);

// Event consumer. Implementations assign sequence numbers.
class EventSink {
public:
    virtual ~EventSink() = default;
    virtual void emit(EventKind kind, std::string node_id, json payload, json timing = nullptr) = 0;
};

class NullSink final : public EventSink {
public:
    void emit(EventKind, std::string, json, json) override {}
};

// The run's single writer. Appends are serialized; each entry is written as
// one JSON line and flushed before emit returns.
class RunLog final : public EventSink {
public:
    RunLog() = default;  // memory only
    // Truncates any existing file.
    explicit RunLog(const std::filesystem::path& path);
    // Keeps the first `high_water_mark` entries of an existing log (rewriting
    // the file atomically) and continues numbering after them. Throws
    // LogCorrupt when the retained prefix is inconsistent.
    static RunLog resume(const std::filesystem::path& path, std::uint64_t high_water_mark);

    RunLog(RunLog&& other) noexcept;
    RunLog& operator=(RunLog&&) = delete;

    void emit(EventKind kind, std::string node_id, json payload, json timing = nullptr) override;

    std::vector<EventLogEntry> entries() const;
    std::uint64_t high_water_mark() const;

private:
    mutable std::mutex mutex_;
    std::vector<EventLogEntry> entries_;
    std::ofstream out_;
    std::filesystem::path path_;
};

// Collects events from one execution context so they can be appended later
// in a deterministic order.
class BufferedSink final : public EventSink {
public:
    void emit(EventKind kind, std::string node_id, json payload, json timing = nullptr) override;
    void flush_into(EventSink& target);
    std::size_t size() const;

private:
    struct Pending {
        EventKind kind;
        std::string node_id;
        json payload;
        json timing;
    };
    mutable std::mutex mutex_;
    std::vector<Pending> pending_;
};

class LogCorrupt : public std::runtime_error {
public:
    LogCorrupt(std::uint64_t gap_at, const std::string& detail)
        : std::runtime_error("event log corrupt at sequence " + std::to_string(gap_at) + ": " + detail),
          gap_at_(gap_at) {}
    std::uint64_t gap_at() const noexcept { return gap_at_; }

private:
    std::uint64_t gap_at_;
};

// Reads a line-delimited log. Checks sequence continuity (1, 2, 3, ...) and
// payload digests; throws LogCorrupt on the first inconsistency.
std::vector<EventLogEntry> read_event_log(const std::filesystem::path& path);

// Digest over every entry with timestamp and timing removed.
std::string event_log_digest(const std::vector<EventLogEntry>& entries);

std::string utc_timestamp_now();

}  // namespace agentflow
