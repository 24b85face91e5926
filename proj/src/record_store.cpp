#include "ecgiot/record_store.hpp"

#include <algorithm>
#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstring>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <spdlog/spdlog.h>
#include <zlib.h>

namespace ecgiot::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ,"crc":"xxxxxxxx"}
constexpr std::string_view kCrcPrefix = ",\"crc\":\"";
constexpr std::size_t kCrcSuffixLen = kCrcPrefix.size() + 8 + 2;

std::uint32_t crc_of(std::string_view s)
{
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

[[noreturn]] void io_error(const std::string& what, const fs::path& path)
{
    throw StoreError(what + " " + path.string() + ": " + std::strerror(errno));
}

bool is_day_name(const std::string& stem)
{
    return stem.size() == 10 && stem[4] == '-' && stem[7] == '-';
}

}  // namespace

std::string encode_line(const StoredDocument& doc)
{
    json j = {{"seq", doc.sequence},
              {"topic", doc.topic},
              {"patient_id", doc.patient_id},
              {"received_at", doc.received_at},
              {"payload", doc.payload}};
    if (doc.message_id)
        j["msg_id"] = *doc.message_id;
    std::string body = j.dump();
    char crc[9];
    std::snprintf(crc, sizeof crc, "%08" PRIx32, crc_of(body));
    body.pop_back();
    body += kCrcPrefix;
    body += crc;
    body += "\"}";
    return body;
}

StoredDocument decode_line(std::string_view line)
{
    if (line.size() <= kCrcSuffixLen || line.substr(line.size() - kCrcSuffixLen, kCrcPrefix.size()) != kCrcPrefix ||
        line.substr(line.size() - 2) != "\"}")
        throw CorruptStoreError("line has no checksum field");
    const auto hex = line.substr(line.size() - 10, 8);
    std::uint32_t expected = 0;
    for (char c : hex) {
        const int v = (c >= '0' && c <= '9') ? c - '0' : (c >= 'a' && c <= 'f') ? c - 'a' + 10 : -1;
        if (v < 0)
            throw CorruptStoreError("malformed checksum");
        expected = expected << 4 | static_cast<std::uint32_t>(v);
    }
    std::string body(line.substr(0, line.size() - kCrcSuffixLen));
    body += '}';
    if (crc_of(body) != expected)
        throw CorruptStoreError("checksum mismatch");
    try {
        const json j = json::parse(body);
        StoredDocument d;
        d.sequence = j.at("seq").get<std::uint64_t>();
        d.topic = j.at("topic").get<std::string>();
        d.patient_id = j.at("patient_id").get<std::string>();
        d.received_at = j.at("received_at").get<TimestampMs>();
        d.payload = j.at("payload");
        if (auto it = j.find("msg_id"); it != j.end())
            d.message_id = it->get<std::string>();
        return d;
    } catch (const json::exception& e) {
        throw CorruptStoreError(std::string("malformed document: ") + e.what());
    }
}

struct RecordStore::File {
    fs::path path;
    std::string day;
    int fd = -1;
    std::uint64_t size = 0;

    ~File()
    {
        if (fd >= 0)
            ::close(fd);
    }
};

RecordStore::RecordStore(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock))
{
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec)
        throw StoreError("cannot create store root " + root_.string() + ": " + ec.message());
    load();
}

RecordStore::~RecordStore() = default;

RecordStore::File& RecordStore::file_for(TopicClass cls, const std::string& day)
{
    const fs::path dir = root_ / topic_class_name(cls);
    const fs::path path = dir / (day + ".log");
    if (auto it = files_.find(path); it != files_.end())
        return *it->second;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw StoreError("cannot create " + dir.string() + ": " + ec.message());
    auto f = std::make_unique<File>();
    f->path = path;
    f->day = day;
    f->fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (f->fd < 0)
        io_error("cannot open", path);
    struct stat st {};
    if (::fstat(f->fd, &st) != 0)
        io_error("cannot stat", path);
    f->size = static_cast<std::uint64_t>(st.st_size);
    return *files_.emplace(path, std::move(f)).first->second;
}

void RecordStore::load()
{
    for (TopicClass cls : {TopicClass::Heartbeat, TopicClass::Waveform, TopicClass::Pqrst, TopicClass::Status}) {
        const fs::path dir = root_ / topic_class_name(cls);
        if (!fs::is_directory(dir))
            continue;
        std::vector<fs::path> logs;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".log" && is_day_name(e.path().stem().string()))
                logs.push_back(e.path());
        std::sort(logs.begin(), logs.end());
        for (const auto& p : logs)
            load_file(cls, p);
    }
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.sequence < b.sequence; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (i > 0 && entries_[i].sequence == entries_[i - 1].sequence)
            throw CorruptStoreError("sequence " + std::to_string(entries_[i].sequence) + " appears twice");
        by_patient_[entries_[i].patient_id].push_back(i);
    }
    if (!entries_.empty())
        next_sequence_ = entries_.back().sequence + 1;

    reset_dedup_window(format_day(clock_()));
    spdlog::debug("store {}: {} documents", root_.string(), entries_.size());
}

void RecordStore::load_file(TopicClass cls, const fs::path& path)
{
    File& f = file_for(cls, path.stem().string());
    std::string data(f.size, '\0');
    std::size_t got = 0;
    while (got < data.size()) {
        const auto n = ::pread(f.fd, data.data() + got, data.size() - got, static_cast<off_t>(got));
        if (n < 0) {
            if (errno == EINTR)
                continue;
            io_error("cannot read", path);
        }
        if (n == 0)
            break;
        got += static_cast<std::size_t>(n);
    }
    data.resize(got);

    std::size_t pos = 0;
    while (pos < data.size()) {
        const auto nl = data.find('\n', pos);
        const bool last = nl == std::string::npos || nl + 1 == data.size();
        const std::string_view line(data.data() + pos, (nl == std::string::npos ? data.size() : nl) - pos);
        try {
            if (nl == std::string::npos)
                throw CorruptStoreError("unterminated line");
            StoredDocument d = decode_line(line);
            entries_.push_back(Entry{d.sequence, d.received_at, cls, d.patient_id, &f, pos,
                                     static_cast<std::uint32_t>(line.size())});
        } catch (const CorruptStoreError& e) {
            if (!last)
                throw CorruptStoreError(path.string() + " at byte " + std::to_string(pos) + ": " + e.what());
            spdlog::warn("store: discarding torn tail of {} at byte {} ({})", path.string(), pos, e.what());
            if (::ftruncate(f.fd, static_cast<off_t>(pos)) != 0)
                io_error("cannot truncate", path);
            ::fdatasync(f.fd);
            f.size = pos;
            break;
        }
        pos = nl + 1;
    }
}

void RecordStore::reset_dedup_window(const std::string& day)
{
    dedup_day_ = day;
    dedup_.clear();
    for (const auto& e : entries_) {
        if (e.file->day != day)
            continue;
        const auto d = read_entry(e);
        if (d.message_id)
            dedup_[{d.topic, *d.message_id}] = d.sequence;
    }
}

AppendResult RecordStore::append(const std::string& topic, const std::string& patient_id, const json& payload,
                                 const std::optional<std::string>& message_id)
{
    const auto parsed = parse_topic(topic);
    if (!parsed)
        throw ValidationError(ValidationError::Kind::Schema, "topic", "unknown topic '" + topic + "'");
    if (parsed->patient_id != patient_id)
        throw ValidationError(ValidationError::Kind::Schema, "patient_id", "does not match the topic");
    if (validate_document(parsed->topic_class, payload) != patient_id)
        throw ValidationError(ValidationError::Kind::Schema, "patient_id", "payload names a different patient");

    std::unique_lock lock(mutex_);
    const TimestampMs now = clock_();
    const std::string day = format_day(now);
    if (day != dedup_day_)
        reset_dedup_window(day);
    if (message_id) {
        if (auto it = dedup_.find({topic, *message_id}); it != dedup_.end())
            return {it->second, true};
    }

    StoredDocument doc{next_sequence_, topic, patient_id, now, payload, message_id};
    const std::string line = encode_line(doc) + '\n';
    File& f = file_for(parsed->topic_class, day);

    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(f.fd, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            const int saved = errno;
            if (::ftruncate(f.fd, static_cast<off_t>(f.size)) != 0)
                spdlog::error("store: cannot roll back partial write to {}", f.path.string());
            errno = saved;
            io_error("cannot append to", f.path);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fdatasync(f.fd) != 0)
        io_error("cannot sync", f.path);

    entries_.push_back(Entry{doc.sequence, now, parsed->topic_class, patient_id, &f, f.size,
                             static_cast<std::uint32_t>(line.size() - 1)});
    by_patient_[patient_id].push_back(entries_.size() - 1);
    f.size += line.size();
    if (message_id)
        dedup_[{topic, *message_id}] = doc.sequence;
    return {next_sequence_++, false};
}

StoredDocument RecordStore::read_entry(const Entry& e) const
{
    std::string buf(e.length, '\0');
    std::size_t got = 0;
    while (got < buf.size()) {
        const auto n = ::pread(e.file->fd, buf.data() + got, buf.size() - got, static_cast<off_t>(e.offset + got));
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            io_error("cannot read", e.file->path);
        got += static_cast<std::size_t>(n);
    }
    return decode_line(buf);
}

std::vector<StoredDocument> RecordStore::read_range(const std::string& patient_id, TopicClass cls, TimestampMs from,
                                                    TimestampMs to) const
{
    if (from > to)
        throw Error("read_range: from is after to");
    std::shared_lock lock(mutex_);
    std::vector<StoredDocument> out;
    const auto it = by_patient_.find(patient_id);
    if (it == by_patient_.end())
        return out;
    for (std::size_t i : it->second) {
        const Entry& e = entries_[i];
        if (e.cls == cls && e.received_at >= from && e.received_at < to)
            out.push_back(read_entry(e));
    }
    return out;
}

std::optional<StoredDocument> RecordStore::latest(const std::string& patient_id, TopicClass cls) const
{
    std::shared_lock lock(mutex_);
    const auto it = by_patient_.find(patient_id);
    if (it == by_patient_.end())
        return std::nullopt;
    for (auto i = it->second.rbegin(); i != it->second.rend(); ++i)
        if (entries_[*i].cls == cls)
            return read_entry(entries_[*i]);
    return std::nullopt;
}

std::vector<PqrstRecord> RecordStore::pqrst_records(const std::optional<std::string>& patient_id) const
{
    std::shared_lock lock(mutex_);
    std::vector<PqrstRecord> out;
    for (const Entry& e : entries_) {
        if (e.cls != TopicClass::Pqrst || (patient_id && e.patient_id != *patient_id))
            continue;
        out.push_back(pqrst_from_json(read_entry(e).payload));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PqrstRecord& a, const PqrstRecord& b) { return a.record_no < b.record_no; });
    return out;
}

std::string RecordStore::export_csv(const std::optional<std::string>& patient_id) const
{
    return to_csv(pqrst_records(patient_id));
}

std::size_t RecordStore::size() const
{
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::vector<std::string> RecordStore::patients() const
{
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : by_patient_)
        out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace ecgiot::store
