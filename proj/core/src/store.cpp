#include "dualtrace/store.hpp"

#include "dualtrace/errors.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dualtrace::store {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kLogName = "entries.log";
constexpr const char* kManifestName = "manifest.json";

// Query-side stopword list; without it, function words in natural questions
// match every stored entry and the zero-overlap abstention floor becomes
// unreachable. Sorted for binary search.
constexpr std::string_view kStopwords[] = {
    "a",    "an",   "and",  "are",  "at",    "be",   "did",  "do",    "does", "for",
    "from", "go",   "had",  "has",  "have",  "how",  "i",    "in",    "is",   "it",
    "me",   "much", "my",   "of",   "on",    "or",   "s",    "t",     "that", "the",
    "this", "to",   "was",  "were", "what",  "when", "where", "which", "who",  "why",
    "with", "you",  "your"};

bool is_stopword(const std::string& token) {
    return std::binary_search(std::begin(kStopwords), std::end(kStopwords), token);
}

std::vector<std::string> query_tokens(const std::string& query) {
    std::vector<std::string> tokens;
    for (auto& token : detail::tokenize(query))
        if (!is_stopword(token)) tokens.push_back(std::move(token));
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return tokens;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

} // namespace

std::string_view to_string(SessionOutcome outcome) {
    switch (outcome) {
    case SessionOutcome::Dropped: return "dropped";
    case SessionOutcome::FactStored: return "fact_stored";
    case SessionOutcome::PairStored: return "pair_stored";
    }
    return "dropped";
}

std::optional<SessionOutcome> session_outcome_from_string(std::string_view text) {
    if (text == "dropped") return SessionOutcome::Dropped;
    if (text == "fact_stored") return SessionOutcome::FactStored;
    if (text == "pair_stored") return SessionOutcome::PairStored;
    return std::nullopt;
}

MemoryStore MemoryStore::open(const fs::path& dir) {
    MemoryStore store(dir);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StoreError("cannot create store directory " + dir.string());

    const auto log_path = dir / kLogName;
    const auto manifest_path = dir / kManifestName;

    if (!fs::exists(manifest_path)) {
        if (fs::exists(log_path) && fs::file_size(log_path) > 0)
            throw StoreError("log present without manifest in " + dir.string());
        std::ofstream log(log_path, std::ios::binary | std::ios::app);
        if (!log) throw StoreError("cannot create log in " + dir.string());
        store.write_manifest({}, {});
        return store;
    }

    ordered_json manifest;
    try {
        manifest = ordered_json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw StoreError("manifest unreadable: " + std::string(e.what()));
    }

    std::size_t record_count = 0;
    std::vector<std::string> record_sessions;
    try {
        record_count = manifest.at("record_count").get<std::size_t>();
        for (const auto& meta : manifest.at("records"))
            record_sessions.push_back(meta.at("session_id").get<std::string>());
        for (const auto& seq : manifest.at("superseded"))
            store.superseded_.insert(seq.get<std::uint64_t>());
        for (const auto& s : manifest.at("sessions")) {
            SessionLedgerEntry entry;
            const auto outcome = session_outcome_from_string(s.at("outcome").get<std::string>());
            if (!outcome) throw StoreError("manifest session outcome unknown");
            entry.outcome = *outcome;
            entry.anchor = s.value("anchor", "");
            entry.tier = s.value("tier", "");
            entry.prompt_tokens = s.value("prompt_tokens", std::int64_t{0});
            entry.completion_tokens = s.value("completion_tokens", std::int64_t{0});
            entry.wall_seconds = s.value("wall_seconds", std::int64_t{0});
            store.session_index_[s.at("id").get<std::string>()] = store.sessions_.size();
            store.sessions_.emplace_back(s.at("id").get<std::string>(), entry);
        }
    } catch (const nlohmann::json::exception& e) {
        throw StoreError("manifest malformed: " + std::string(e.what()));
    }
    if (record_sessions.size() != record_count)
        throw StoreError("manifest record metadata does not match record_count");

    // Replay the committed region of the log; drop any crash tail beyond it.
    const std::string content = fs::exists(log_path) ? read_file(log_path) : std::string{};
    std::size_t pos = 0;
    std::size_t committed_end = 0;
    for (std::size_t i = 0; i < record_count; ++i) {
        if (pos >= content.size())
            throw StoreError("log shorter than manifest (record " + std::to_string(i + 1) +
                             " missing)");
        const auto sep = content.find("\n\n", pos);
        const auto record_text = sep == std::string::npos
                                     ? std::string_view(content).substr(pos)
                                     : std::string_view(content).substr(pos, sep + 1 - pos);
        MemoryEntry entry;
        try {
            entry = parse_entry(record_text);
        } catch (const ParseError& e) {
            throw StoreError("committed log record " + std::to_string(i + 1) +
                             " corrupt: " + e.what());
        }
        store.records_.push_back({std::move(entry), record_sessions[i],
                                  static_cast<std::uint64_t>(i + 1)});
        committed_end = pos + record_text.size();
        pos = sep == std::string::npos ? content.size() : sep + 2;
    }
    if (committed_end < content.size()) {
        std::error_code trunc_ec;
        fs::resize_file(log_path, committed_end, trunc_ec);
        if (trunc_ec) throw StoreError("cannot drop uncommitted log tail");
    }

    for (std::size_t i = 0; i < store.records_.size(); ++i) {
        const auto& record = store.records_[i];
        if (store.superseded_.count(record.insert_seq)) continue;
        auto& group = store.index_[record.entry.anchor.str()];
        auto& slot =
            record.entry.kind == TraceKind::Fact ? group.fact_index : group.scene_index;
        if (slot)
            store.open_violations_.push_back("duplicate live record for anchor '" +
                                             record.entry.anchor.str() + "'");
        slot = i;
    }

    store.next_seq_ = record_count + 1;
    store.log_end_offset_ = committed_end;
    return store;
}

void MemoryStore::write_manifest(const std::vector<StoreRecord>& pending_additions,
                                 const std::vector<std::uint64_t>& pending_superseded,
                                 const std::string* mark_session,
                                 const SessionLedgerEntry* mark_entry) const {
    ordered_json manifest;
    manifest["version"] = 1;
    manifest["record_count"] = records_.size() + pending_additions.size();
    auto& records = manifest["records"] = ordered_json::array();
    for (const auto& r : records_) records.push_back({{"session_id", r.session_id}});
    for (const auto& r : pending_additions) records.push_back({{"session_id", r.session_id}});

    std::vector<std::uint64_t> superseded(superseded_.begin(), superseded_.end());
    superseded.insert(superseded.end(), pending_superseded.begin(), pending_superseded.end());
    std::sort(superseded.begin(), superseded.end());
    manifest["superseded"] = superseded;

    auto& sessions = manifest["sessions"] = ordered_json::array();
    const auto render = [&sessions](const std::string& id, const SessionLedgerEntry& entry) {
        sessions.push_back({{"id", id},
                            {"outcome", std::string(to_string(entry.outcome))},
                            {"anchor", entry.anchor},
                            {"tier", entry.tier},
                            {"prompt_tokens", entry.prompt_tokens},
                            {"completion_tokens", entry.completion_tokens},
                            {"wall_seconds", entry.wall_seconds}});
    };
    bool mark_rendered = false;
    for (const auto& [id, entry] : sessions_) {
        if (mark_session && id == *mark_session) {
            render(id, *mark_entry);
            mark_rendered = true;
        } else {
            render(id, entry);
        }
    }
    if (mark_session && !mark_rendered) render(*mark_session, *mark_entry);

    const auto manifest_path = dir_ / kManifestName;
    const auto tmp_path = dir_ / (std::string(kManifestName) + ".tmp");
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write manifest in " + dir_.string());
        out << manifest.dump(2) << '\n';
        out.flush();
        if (!out) throw StoreError("manifest write failed in " + dir_.string());
    }
    std::error_code ec;
    fs::rename(tmp_path, manifest_path, ec);
    if (ec) throw StoreError("manifest rename failed: " + ec.message());
}

// Single commit path: append all additions in one buffered write, then move
// the commit point by rewriting the manifest. Memory state changes only
// after both succeed, so a failure at any point leaves the open store
// consistent with the old manifest.
void MemoryStore::commit(const std::vector<StoreRecord>& additions,
                         const std::vector<std::uint64_t>& newly_superseded,
                         const std::string* mark_session, const SessionLedgerEntry* mark_entry) {
    const auto log_path = dir_ / kLogName;
    if (dirty_tail_) {
        std::error_code ec;
        fs::resize_file(log_path, log_end_offset_, ec);
        if (ec) throw StoreError("cannot repair log tail");
        dirty_tail_ = false;
    }

    std::vector<StoreRecord> sequenced = additions;
    std::string buffer;
    for (auto& record : sequenced) {
        record.insert_seq = records_.size() + (&record - sequenced.data()) + 1;
        if (log_end_offset_ > 0 || !buffer.empty()) buffer += '\n';
        buffer += serialize_entry(record.entry);
    }

    {
        std::ofstream log(log_path, std::ios::binary | std::ios::app);
        if (!log) throw StoreError("cannot open log for append");
        log.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        log.flush();
        if (!log) {
            dirty_tail_ = true;
            throw StoreError("log append failed");
        }
    }

    try {
        write_manifest(sequenced, newly_superseded, mark_session, mark_entry);
    } catch (...) {
        dirty_tail_ = true;
        throw;
    }

    for (const auto& seq : newly_superseded) {
        superseded_.insert(seq);
        const auto& old = records_[seq - 1];
        auto& group = index_[old.entry.anchor.str()];
        auto& slot = old.entry.kind == TraceKind::Fact ? group.fact_index : group.scene_index;
        if (slot && *slot == seq - 1) slot.reset();
    }
    for (auto& record : sequenced) {
        auto& group = index_[record.entry.anchor.str()];
        auto& slot =
            record.entry.kind == TraceKind::Fact ? group.fact_index : group.scene_index;
        slot = records_.size();
        records_.push_back(std::move(record));
    }
    next_seq_ = records_.size() + 1;
    log_end_offset_ += buffer.size();

    if (mark_session) {
        const auto it = session_index_.find(*mark_session);
        if (it != session_index_.end()) {
            sessions_[it->second].second = *mark_entry;
        } else {
            sessions_.emplace_back(*mark_session, *mark_entry);
            session_index_[*mark_session] = sessions_.size() - 1;
        }
    }
}

Anchor MemoryStore::resolve_collision(const Anchor& proposed) const {
    if (!index_.count(proposed.str())) return proposed;
    const std::string& base = proposed.str();
    for (int n = 2;; ++n) {
        const std::string suffix = "_" + std::to_string(n);
        const auto stem_len = std::min(base.size(), std::size_t{64} - suffix.size());
        const std::string candidate = base.substr(0, stem_len) + suffix;
        if (!index_.count(candidate)) return Anchor(candidate);
    }
}

Anchor MemoryStore::insert_pair(MemoryEntry fact, MemoryEntry scene,
                                const std::string& session_id,
                                const SessionLedgerEntry* session_mark) {
    const auto report = validate_pair(fact, scene); // also checks kinds
    if (!report.valid) throw ValidationError("invalid pair: " + report.violations.front());

    const auto anchor = resolve_collision(fact.anchor);
    if (anchor != fact.anchor) {
        fact.anchor = anchor;
        scene.anchor = anchor;
        fact.frontmatter.linked_scene = anchor;
        scene.frontmatter.linked_fact = anchor;
        const auto recheck = validate_pair(fact, scene);
        if (!recheck.valid)
            throw ValidationError("re-anchored pair invalid: " + recheck.violations.front());
    }

    SessionLedgerEntry marked;
    if (session_mark) {
        marked = *session_mark;
        marked.anchor = anchor.str(); // collision suffix, if any, lands in the ledger too
    }
    commit({{std::move(fact), session_id, 0}, {std::move(scene), session_id, 0}}, {},
           session_mark ? &session_id : nullptr, session_mark ? &marked : nullptr);
    return anchor;
}

Anchor MemoryStore::insert_fact(MemoryEntry fact, const std::string& session_id,
                                const SessionLedgerEntry* session_mark) {
    if (fact.kind != TraceKind::Fact) throw ValidationError("insert_fact: entry is not a FACT");
    if (fact.frontmatter.linked_scene)
        throw ValidationError("insert_fact: linked_scene present on a single fact");
    const auto violations = validate_entry(fact);
    if (!violations.empty()) throw ValidationError(violations.front());

    const auto anchor = resolve_collision(fact.anchor);
    fact.anchor = anchor;
    SessionLedgerEntry marked;
    if (session_mark) {
        marked = *session_mark;
        marked.anchor = anchor.str();
    }
    commit({{std::move(fact), session_id, 0}}, {},
           session_mark ? &session_id : nullptr, session_mark ? &marked : nullptr);
    return anchor;
}

Anchor MemoryStore::update_pair(MemoryEntry fact, MemoryEntry scene,
                                const std::string& session_id) {
    const auto report = validate_pair(fact, scene);
    if (!report.valid) throw ValidationError("invalid pair: " + report.violations.front());

    const auto it = index_.find(fact.anchor.str());
    if (it == index_.end())
        throw StoreError("update of unknown anchor '" + fact.anchor.str() + "'");

    std::vector<std::uint64_t> superseded;
    if (it->second.fact_index) superseded.push_back(records_[*it->second.fact_index].insert_seq);
    if (it->second.scene_index)
        superseded.push_back(records_[*it->second.scene_index].insert_seq);

    const auto anchor = fact.anchor;
    commit({{std::move(fact), session_id, 0}, {std::move(scene), session_id, 0}}, superseded);
    return anchor;
}

Anchor MemoryStore::update_fact(MemoryEntry fact, const std::string& session_id) {
    if (fact.kind != TraceKind::Fact) throw ValidationError("update_fact: entry is not a FACT");
    if (fact.frontmatter.linked_scene)
        throw ValidationError("update_fact: linked_scene present on a single fact");
    const auto violations = validate_entry(fact);
    if (!violations.empty()) throw ValidationError(violations.front());

    const auto it = index_.find(fact.anchor.str());
    if (it == index_.end())
        throw StoreError("update of unknown anchor '" + fact.anchor.str() + "'");

    std::vector<std::uint64_t> superseded;
    if (it->second.fact_index) superseded.push_back(records_[*it->second.fact_index].insert_seq);
    if (it->second.scene_index) // a fact-only update drops the stored scene
        superseded.push_back(records_[*it->second.scene_index].insert_seq);

    const auto anchor = fact.anchor;
    commit({{std::move(fact), session_id, 0}}, superseded);
    return anchor;
}

std::optional<MemoryStore::Pair> MemoryStore::get_by_anchor(const Anchor& anchor) const {
    const auto it = index_.find(anchor.str());
    if (it == index_.end()) return std::nullopt;
    const auto& group = it->second;
    if (!group.fact_index)
        throw IntegrityError("orphan scene under anchor '" + anchor.str() + "'");

    const auto& fact = records_[*group.fact_index];
    if (fact.entry.frontmatter.linked_scene) {
        if (!group.scene_index)
            throw IntegrityError("dangling linked_scene on '" + anchor.str() + "'");
        return Pair{fact, records_[*group.scene_index]};
    }
    if (group.scene_index)
        throw IntegrityError("scene stored without forward link on '" + anchor.str() + "'");
    return Pair{fact, std::nullopt};
}

bool MemoryStore::contains(const Anchor& anchor) const {
    return index_.count(anchor.str()) > 0;
}

int MemoryStore::score_record(const StoreRecord& record,
                              const std::vector<std::string>& tokens) const {
    std::vector<std::string> slug_tokens = detail::tokenize(record.entry.anchor.str());
    std::sort(slug_tokens.begin(), slug_tokens.end());

    std::vector<std::string> text_tokens = detail::tokenize(record.entry.frontmatter.category);
    for (const auto& component : record.entry.components) {
        auto more = detail::tokenize(component);
        text_tokens.insert(text_tokens.end(), more.begin(), more.end());
    }
    auto body_tokens = detail::tokenize(record.entry.body);
    text_tokens.insert(text_tokens.end(), body_tokens.begin(), body_tokens.end());
    std::sort(text_tokens.begin(), text_tokens.end());

    int score = 0;
    for (const auto& token : tokens) {
        if (std::binary_search(slug_tokens.begin(), slug_tokens.end(), token))
            score += 2;
        else if (std::binary_search(text_tokens.begin(), text_tokens.end(), token))
            score += 1;
    }
    return score;
}

std::vector<SearchHit> MemoryStore::search(const std::string& query, std::size_t k) const {
    if (k < 1) throw ValidationError("search: k must be >= 1");
    const auto tokens = query_tokens(query);
    if (tokens.empty()) return {};

    std::vector<std::pair<int, std::size_t>> scored; // (score, records_ index)
    for (const auto& [anchor, group] : index_) {
        for (const auto& slot : {group.fact_index, group.scene_index}) {
            if (!slot) continue;
            const int score = score_record(records_[*slot], tokens);
            if (score >= 1) scored.emplace_back(score, *slot);
        }
    }
    std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return records_[a.second].insert_seq < records_[b.second].insert_seq;
    });

    std::vector<SearchHit> out;
    std::set<std::uint64_t> seen;
    for (const auto& [score, idx] : scored) {
        const auto& record = records_[idx];
        if (seen.count(record.insert_seq)) continue;
        if (out.size() >= k) break;
        out.push_back({record, score, false});
        seen.insert(record.insert_seq);

        const auto& group = index_.at(record.entry.anchor.str());
        const auto partner =
            record.entry.kind == TraceKind::Fact ? group.scene_index : group.fact_index;
        if (partner && !seen.count(records_[*partner].insert_seq)) {
            out.push_back({records_[*partner], score_record(records_[*partner], tokens), true});
            seen.insert(records_[*partner].insert_seq);
        }
    }

    std::stable_sort(out.begin(), out.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.record.insert_seq < b.record.insert_seq;
    });
    return out;
}

void MemoryStore::record_session_processed(const std::string& session_id,
                                           SessionLedgerEntry entry) {
    const auto it = session_index_.find(session_id);
    if (it != session_index_.end()) {
        const auto previous = sessions_[it->second].second;
        sessions_[it->second].second = entry;
        try {
            write_manifest({}, {});
        } catch (...) {
            sessions_[it->second].second = previous;
            throw;
        }
        return;
    }
    sessions_.emplace_back(session_id, entry);
    session_index_[session_id] = sessions_.size() - 1;
    try {
        write_manifest({}, {});
    } catch (...) {
        session_index_.erase(session_id);
        sessions_.pop_back();
        throw;
    }
}

bool MemoryStore::session_processed(const std::string& session_id) const {
    return session_index_.count(session_id) > 0;
}

const SessionLedgerEntry* MemoryStore::session_entry(const std::string& session_id) const {
    const auto it = session_index_.find(session_id);
    return it == session_index_.end() ? nullptr : &sessions_[it->second].second;
}

CoverageStats MemoryStore::coverage_stats() const {
    CoverageStats stats;
    stats.sessions_processed = sessions_.size();
    std::size_t dual = 0;
    for (const auto& [id, entry] : sessions_) {
        if (entry.outcome == SessionOutcome::Dropped) continue;
        ++stats.sessions_stored;
        if (entry.outcome == SessionOutcome::PairStored) ++dual;
    }
    stats.empty = sessions_.empty();
    if (stats.sessions_processed > 0)
        stats.coverage_ratio = static_cast<double>(stats.sessions_stored) /
                               static_cast<double>(stats.sessions_processed);
    if (stats.sessions_stored > 0)
        stats.dual_ratio = static_cast<double>(dual) / static_cast<double>(stats.sessions_stored);
    return stats;
}

std::vector<std::string> MemoryStore::audit() const {
    std::vector<std::string> violations = open_violations_;
    for (const auto& [anchor, group] : index_) {
        if (!group.fact_index) {
            violations.push_back("orphan scene under '" + anchor + "'");
            continue;
        }
        const auto& fact = records_[*group.fact_index];
        if (group.scene_index) {
            const auto report =
                validate_pair(fact.entry, records_[*group.scene_index].entry);
            for (const auto& violation : report.violations)
                violations.push_back("'" + anchor + "': " + violation);
        } else if (fact.entry.frontmatter.linked_scene) {
            violations.push_back("dangling linked_scene on '" + anchor + "'");
        }
    }
    return violations;
}

std::vector<StoreRecord> MemoryStore::records() const {
    std::vector<std::size_t> visible;
    for (const auto& [anchor, group] : index_) {
        if (group.fact_index) visible.push_back(*group.fact_index);
        if (group.scene_index) visible.push_back(*group.scene_index);
    }
    std::sort(visible.begin(), visible.end());
    std::vector<StoreRecord> out;
    out.reserve(visible.size());
    for (const auto idx : visible) out.push_back(records_[idx]);
    return out;
}

} // namespace dualtrace::store
