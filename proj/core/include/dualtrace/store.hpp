// Persistent archival store of MemoryEntry values.
//
// Layout on disk: one append-only log of serialized entries (records
// separated by a blank line) plus a sidecar manifest.json. The manifest is
// the commit point: it records how many log records are committed, which
// sequence numbers have been superseded by updates, and the processed-
// sessions ledger. On open, any log bytes beyond the committed record count
// are discarded (crash tail), so a torn pair write is never visible.
#pragma once

#include "dualtrace/trace.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dualtrace::store {

struct StoreRecord {
    MemoryEntry entry;
    std::string session_id;
    std::uint64_t insert_seq = 0;
};

struct CoverageStats {
    std::size_t sessions_processed = 0;
    std::size_t sessions_stored = 0;
    double coverage_ratio = 0.0;
    double dual_ratio = 0.0; // fraction of stored sessions holding a fact+scene pair
    bool empty = true;       // nothing processed yet; ratios are vacuous
};

struct SearchHit {
    StoreRecord record;
    int score = 0;              // lexical overlap score at ranking time
    bool pair_completed = false; // pulled in as the partner of a ranked hit
};

enum class SessionOutcome { Dropped, FactStored, PairStored };

std::string_view to_string(SessionOutcome outcome);
std::optional<SessionOutcome> session_outcome_from_string(std::string_view text);

/// Per-session ledger entry kept in the manifest so an interrupted teach run
/// can reconstruct its run-ledger lines without re-encoding.
struct SessionLedgerEntry {
    SessionOutcome outcome = SessionOutcome::Dropped;
    std::string anchor; // empty when dropped
    std::string tier;   // DROP / STREAMLINED / FULL
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t wall_seconds = 0;
};

class MemoryStore {
public:
    /// Creates the directory/files on first open; otherwise replays the log
    /// against the manifest, truncating any uncommitted tail. Throws
    /// StoreError when the committed region itself is unreadable.
    static MemoryStore open(const std::filesystem::path& dir);

    MemoryStore(MemoryStore&&) = default;
    MemoryStore& operator=(MemoryStore&&) = default;
    MemoryStore(const MemoryStore&) = delete;
    MemoryStore& operator=(const MemoryStore&) = delete;

    /// Inserts a reciprocal fact/scene pair atomically, re-anchoring with a
    /// `_2`, `_3`... suffix on collision (cross-links rewritten to match).
    /// Returns the final anchor. Throws ValidationError if the pair is
    /// invalid, StoreError on I/O failure (no partial pair becomes visible).
    /// When `session_mark` is given, the session ledger entry commits in the
    /// same manifest write, so a crash can never leave the records stored
    /// but the session unmarked (which would double-encode on resume).
    Anchor insert_pair(MemoryEntry fact, MemoryEntry scene, const std::string& session_id,
                       const SessionLedgerEntry* session_mark = nullptr);

    /// Inserts a single fact (no linked_scene allowed); same collision rule
    /// and session-mark semantics.
    Anchor insert_fact(MemoryEntry fact, const std::string& session_id,
                       const SessionLedgerEntry* session_mark = nullptr);

    /// Replaces the entries stored under an existing anchor (both kinds are
    /// superseded; update_fact therefore drops a previously stored scene).
    /// Throws StoreError if the anchor is unknown.
    Anchor update_pair(MemoryEntry fact, MemoryEntry scene, const std::string& session_id);
    Anchor update_fact(MemoryEntry fact, const std::string& session_id);

    struct Pair {
        StoreRecord fact;
        std::optional<StoreRecord> scene;
    };

    /// Resolves an anchor to its fact and (if stored) scene. Absent anchors
    /// return nullopt; a fact whose linked_scene does not resolve — or an
    /// orphan scene — throws IntegrityError, distinct from absence.
    std::optional<Pair> get_by_anchor(const Anchor& anchor) const;

    /// Presence check that never throws; used for update detection.
    bool contains(const Anchor& anchor) const;

    /// Lexical search: lowercased stopword-filtered query tokens scored per
    /// record (2 per token matching the anchor slug, 1 per token matching
    /// category/components/body), zero-score records excluded, ties broken
    /// by lower insert_seq. A ranked hit always pulls its pair partner into
    /// the result set, even past the k budget.
    std::vector<SearchHit> search(const std::string& query, std::size_t k = 10) const;

    void record_session_processed(const std::string& session_id, SessionLedgerEntry entry);
    bool session_processed(const std::string& session_id) const;
    const SessionLedgerEntry* session_entry(const std::string& session_id) const;

    CoverageStats coverage_stats() const;

    /// Full-store referential-integrity audit; returns human-readable
    /// violations (empty means clean).
    std::vector<std::string> audit() const;

    /// All visible (non-superseded) records in insertion order.
    std::vector<StoreRecord> records() const;

    std::uint64_t insert_seq() const { return next_seq_ - 1; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    explicit MemoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    struct Group {
        std::optional<std::size_t> fact_index;  // into records_
        std::optional<std::size_t> scene_index;
    };

    Anchor resolve_collision(const Anchor& proposed) const;
    void commit(const std::vector<StoreRecord>& additions,
                const std::vector<std::uint64_t>& newly_superseded,
                const std::string* mark_session = nullptr,
                const SessionLedgerEntry* mark_entry = nullptr);
    void write_manifest(const std::vector<StoreRecord>& pending_additions,
                        const std::vector<std::uint64_t>& pending_superseded,
                        const std::string* mark_session = nullptr,
                        const SessionLedgerEntry* mark_entry = nullptr) const;
    int score_record(const StoreRecord& record,
                     const std::vector<std::string>& query_tokens) const;

    std::filesystem::path dir_;
    std::vector<StoreRecord> records_; // every committed record, in log order
    std::set<std::uint64_t> superseded_;
    std::map<std::string, Group> index_; // anchor -> visible records
    std::vector<std::pair<std::string, SessionLedgerEntry>> sessions_;
    std::map<std::string, std::size_t> session_index_;
    std::uint64_t next_seq_ = 1;
    std::uintmax_t log_end_offset_ = 0;
    bool dirty_tail_ = false; // a failed append may have left junk past the commit point
    std::vector<std::string> open_violations_;
};

} // namespace dualtrace::store
