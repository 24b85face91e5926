#pragma once

// Append-only document store.
//
// Layout: <root>/<topic-class>/<YYYY-MM-DD>.log, one JSON document per line
// with a trailing CRC-32 field. The in-memory index is rebuilt on open; a torn
// final line is discarded, corruption anywhere else is an error.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ecgiot/error.hpp"
#include "ecgiot/records.hpp"
#include "ecgiot/timeutil.hpp"

namespace ecgiot::store {

class StoreError : public Error {
public:
    using Error::Error;
};

class CorruptStoreError : public StoreError {
public:
    using StoreError::StoreError;
};

struct StoredDocument {
    std::uint64_t sequence = 0;
    std::string topic;
    std::string patient_id;
    TimestampMs received_at = 0;
    nlohmann::json payload;
    std::optional<std::string> message_id;
};

struct AppendResult {
    std::uint64_t sequence = 0;
    bool duplicate = false;
};

class RecordStore {
public:
    explicit RecordStore(std::filesystem::path root, Clock clock = system_now_ms);
    ~RecordStore();
    RecordStore(const RecordStore&) = delete;
    RecordStore& operator=(const RecordStore&) = delete;

    // Validates payload against the topic's schema (ValidationError), then
    // writes and syncs. A repeated (topic, message_id) within the current day
    // returns the original sequence with duplicate = true.
    AppendResult append(const std::string& topic, const std::string& patient_id, const nlohmann::json& payload,
                        const std::optional<std::string>& message_id = std::nullopt);

    // Documents with from <= received_at < to, in sequence order.
    std::vector<StoredDocument> read_range(const std::string& patient_id, TopicClass cls, TimestampMs from,
                                           TimestampMs to) const;

    std::optional<StoredDocument> latest(const std::string& patient_id, TopicClass cls) const;

    // Every stored PQRST record (optionally one patient's), ordered by record
    // number then sequence.
    std::vector<PqrstRecord> pqrst_records(const std::optional<std::string>& patient_id = std::nullopt) const;
    std::string export_csv(const std::optional<std::string>& patient_id = std::nullopt) const;

    std::size_t size() const;
    std::vector<std::string> patients() const;
    const std::filesystem::path& root() const { return root_; }

private:
    struct File;
    struct Entry {
        std::uint64_t sequence;
        TimestampMs received_at;
        TopicClass cls;
        std::string patient_id;
        File* file;
        std::uint64_t offset;
        std::uint32_t length;
    };

    void load();
    void load_file(TopicClass cls, const std::filesystem::path& path);
    File& file_for(TopicClass cls, const std::string& day);
    StoredDocument read_entry(const Entry& e) const;
    void reset_dedup_window(const std::string& day);

    std::filesystem::path root_;
    Clock clock_;

    mutable std::shared_mutex mutex_;
    std::map<std::filesystem::path, std::unique_ptr<File>> files_;
    std::vector<Entry> entries_;  // sequence order
    std::unordered_map<std::string, std::vector<std::size_t>> by_patient_;
    std::uint64_t next_sequence_ = 1;

    std::string dedup_day_;
    std::map<std::pair<std::string, std::string>, std::uint64_t> dedup_;
};

// Serialized line for one document, checksum included, without the newline.
std::string encode_line(const StoredDocument& doc);
// Throws CorruptStoreError on a bad checksum or malformed document.
StoredDocument decode_line(std::string_view line);

}  // namespace ecgiot::store
