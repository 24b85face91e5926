#include "ecgiot/records.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "ecgiot/delineation.hpp"

namespace ecgiot {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<TopicClass, std::string_view>, 4> kTopicSuffixes{{
    {TopicClass::Heartbeat, "heartbeat"},
    {TopicClass::Waveform, "ecg/waveform"},
    {TopicClass::Pqrst, "ecg/pqrst"},
    {TopicClass::Status, "status"},
}};

constexpr std::string_view kTopicRoot = "clinic/";

[[noreturn]] void schema_error(const std::string& field, const std::string& detail)
{
    throw ValidationError(ValidationError::Kind::Schema, field, detail);
}

[[noreturn]] void range_error(const std::string& field, const std::string& detail)
{
    throw ValidationError(ValidationError::Kind::Range, field, detail);
}

const json& require(const json& j, const char* field)
{
    if (!j.is_object())
        schema_error("$", "document must be a JSON object");
    const auto it = j.find(field);
    if (it == j.end())
        schema_error(field, "missing");
    return *it;
}

std::int64_t require_int(const json& j, const char* field)
{
    const json& v = require(j, field);
    if (v.is_number_integer())
        return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15)
            return static_cast<std::int64_t>(d);
    }
    schema_error(field, "expected an integer");
}

double require_number(const json& j, const char* field)
{
    const json& v = require(j, field);
    if (!v.is_number())
        schema_error(field, "expected a number");
    return v.get<double>();
}

std::string require_string(const json& j, const char* field)
{
    const json& v = require(j, field);
    if (!v.is_string())
        schema_error(field, "expected a string");
    return v.get<std::string>();
}

std::string require_patient(const json& j)
{
    auto id = require_string(j, "patient_id");
    if (!is_valid_patient_id(id))
        schema_error("patient_id", "must be 1-64 characters from [A-Za-z0-9_.-]");
    return id;
}

TimestampMs require_timestamp(const json& j, const char* field)
{
    const auto text = require_string(j, field);
    const auto ts = parse_rfc3339(text);
    if (!ts)
        schema_error(field, "expected an RFC 3339 timestamp");
    return *ts;
}

void check_score(const char* field, double v)
{
    if (!(v >= 0.0 && v <= 100.0))
        range_error(field, "score must be within [0, 100]");
}

double parse_double(std::string_view text, const char* field)
{
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        schema_error(field, "not a number: '" + std::string(text) + "'");
    return v;
}

int parse_int(std::string_view text, const char* field)
{
    int v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        schema_error(field, "not an integer: '" + std::string(text) + "'");
    return v;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

}  // namespace

const char* topic_class_name(TopicClass c)
{
    switch (c) {
    case TopicClass::Heartbeat: return "heartbeat";
    case TopicClass::Waveform: return "waveform";
    case TopicClass::Pqrst: return "pqrst";
    case TopicClass::Status: return "status";
    }
    return "unknown";
}

std::optional<TopicClass> topic_class_from_name(std::string_view name)
{
    for (auto c : {TopicClass::Heartbeat, TopicClass::Waveform, TopicClass::Pqrst, TopicClass::Status})
        if (name == topic_class_name(c))
            return c;
    return std::nullopt;
}

std::string make_topic(std::string_view patient_id, TopicClass c)
{
    for (const auto& [cls, suffix] : kTopicSuffixes)
        if (cls == c)
            return std::string(kTopicRoot) + std::string(patient_id) + "/" + std::string(suffix);
    return {};
}

std::optional<ParsedTopic> parse_topic(std::string_view topic)
{
    if (!topic.starts_with(kTopicRoot))
        return std::nullopt;
    topic.remove_prefix(kTopicRoot.size());
    const auto slash = topic.find('/');
    if (slash == std::string_view::npos)
        return std::nullopt;
    const auto id = topic.substr(0, slash);
    const auto rest = topic.substr(slash + 1);
    if (!is_valid_patient_id(id))
        return std::nullopt;
    for (const auto& [cls, suffix] : kTopicSuffixes)
        if (rest == suffix)
            return ParsedTopic{std::string(id), cls};
    return std::nullopt;
}

bool is_valid_patient_id(std::string_view id)
{
    if (id.empty() || id.size() > 64)
        return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               c == '-' || c == '.';
    });
}

json to_json(const HeartbeatReading& r)
{
    return {{"patient_id", r.patient_id},
            {"bpm", r.bpm},
            {"window_seconds", r.window_seconds},
            {"measured_at", format_rfc3339(r.measured_at)}};
}

json to_json(const PqrstRecord& r)
{
    return {{"record_no", r.record_no}, {"age", r.age}, {"p", r.p}, {"q", r.q}, {"r", r.r}, {"s", r.s},
            {"t", r.t}, {"patient_id", r.patient_id}, {"captured_at", format_rfc3339(r.captured_at)}};
}

json to_json(const WaveformChunk& c)
{
    json lead_off = json::array();
    for (bool b : c.lead_off)
        lead_off.push_back(b);
    return {{"patient_id", c.patient_id},
            {"seq", c.seq},
            {"sample_rate", c.sample_rate},
            {"samples", c.samples},
            {"lead_off", std::move(lead_off)}};
}

json to_json(const StatusEvent& e)
{
    json j = {{"patient_id", e.patient_id}, {"event", e.event}, {"message", e.message}};
    if (e.overall_score)
        j["overall_score"] = *e.overall_score;
    return j;
}

HeartbeatReading heartbeat_from_json(const json& j)
{
    HeartbeatReading r;
    r.patient_id = require_patient(j);
    const auto bpm = require_int(j, "bpm");
    const auto window = require_int(j, "window_seconds");
    r.measured_at = require_timestamp(j, "measured_at");
    if (bpm < 0 || bpm > 750)
        range_error("bpm", "must be within [0, 750]");
    if (bpm % 3 != 0)
        range_error("bpm", "must be a 20-second beat count times 3");
    if (window != 20)
        range_error("window_seconds", "must be 20");
    r.bpm = static_cast<int>(bpm);
    r.window_seconds = static_cast<int>(window);
    return r;
}

void validate(const PqrstRecord& r)
{
    if (r.record_no < 1)
        range_error("record_no", "must be a positive integer");
    if (r.age < 1 || r.age > 120)
        range_error("age", "must be within [1, 120]");
    check_score("p", r.p);
    check_score("q", r.q);
    check_score("r", r.r);
    check_score("s", r.s);
    check_score("t", r.t);
}

PqrstRecord pqrst_from_json(const json& j)
{
    PqrstRecord r;
    const auto record_no = require_int(j, "record_no");
    const auto age = require_int(j, "age");
    r.p = require_number(j, "p");
    r.q = require_number(j, "q");
    r.r = require_number(j, "r");
    r.s = require_number(j, "s");
    r.t = require_number(j, "t");
    r.patient_id = require_patient(j);
    r.captured_at = require_timestamp(j, "captured_at");
    if (record_no < 1 || record_no > std::numeric_limits<int>::max())
        range_error("record_no", "must be a positive integer");
    if (age < 1 || age > 120)
        range_error("age", "must be within [1, 120]");
    r.record_no = static_cast<int>(record_no);
    r.age = static_cast<int>(age);
    validate(r);
    return r;
}

WaveformChunk waveform_from_json(const json& j)
{
    WaveformChunk c;
    c.patient_id = require_patient(j);
    const auto seq = require_int(j, "seq");
    if (seq < 0)
        range_error("seq", "must be >= 0");
    c.seq = static_cast<std::uint64_t>(seq);
    c.sample_rate = require_number(j, "sample_rate");
    if (!(c.sample_rate >= 100.0))
        range_error("sample_rate", "must be >= 100");
    const json& samples = require(j, "samples");
    const json& lead_off = require(j, "lead_off");
    if (!samples.is_array())
        schema_error("samples", "expected an array");
    if (!lead_off.is_array())
        schema_error("lead_off", "expected an array");
    if (samples.size() != lead_off.size())
        schema_error("lead_off", "must have one entry per sample");
    for (const auto& v : samples) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 65535)
            schema_error("samples", "entries must be ADC codes in [0, 65535]");
        c.samples.push_back(v.get<std::uint32_t>());
    }
    for (const auto& v : lead_off) {
        if (!v.is_boolean())
            schema_error("lead_off", "entries must be booleans");
        c.lead_off.push_back(v.get<bool>());
    }
    return c;
}

StatusEvent status_from_json(const json& j)
{
    StatusEvent e;
    e.patient_id = require_patient(j);
    e.event = require_string(j, "event");
    e.message = require_string(j, "message");
    if (j.contains("overall_score")) {
        e.overall_score = require_number(j, "overall_score");
        check_score("overall_score", *e.overall_score);
    }
    return e;
}

std::string validate_document(TopicClass c, const json& doc)
{
    switch (c) {
    case TopicClass::Heartbeat: return heartbeat_from_json(doc).patient_id;
    case TopicClass::Waveform: return waveform_from_json(doc).patient_id;
    case TopicClass::Pqrst: return pqrst_from_json(doc).patient_id;
    case TopicClass::Status: return status_from_json(doc).patient_id;
    }
    schema_error("$", "unknown topic class");
}

std::string to_csv_row(const PqrstRecord& r)
{
    using delineation::format_score;
    std::string row = std::to_string(r.record_no) + "," + std::to_string(r.age);
    for (double v : {r.p, r.q, r.r, r.s, r.t})
        row += "," + format_score(v);
    return row;
}

PqrstRecord parse_csv_row(std::string_view line)
{
    std::array<std::string_view, 7> cells;
    std::size_t n = 0;
    while (true) {
        const auto comma = line.find(',');
        if (n == cells.size())
            schema_error("csv", "expected 7 columns");
        cells[n++] = trim(line.substr(0, comma));
        if (comma == std::string_view::npos)
            break;
        line.remove_prefix(comma + 1);
    }
    if (n != cells.size())
        schema_error("csv", "expected 7 columns, got " + std::to_string(n));

    PqrstRecord r;
    r.record_no = parse_int(cells[0], "Record No");
    r.age = parse_int(cells[1], "Age");
    r.p = parse_double(cells[2], "P");
    r.q = parse_double(cells[3], "Q");
    r.r = parse_double(cells[4], "R");
    r.s = parse_double(cells[5], "S");
    r.t = parse_double(cells[6], "T");
    validate(r);
    return r;
}

std::string to_csv(const std::vector<PqrstRecord>& records)
{
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& r : records) {
        out += to_csv_row(r);
        out += '\n';
    }
    return out;
}

std::vector<PqrstRecord> parse_csv(std::string_view text)
{
    std::vector<PqrstRecord> out;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (line.empty())
            continue;
        if (!header_seen) {
            if (line != kCsvHeader)
                schema_error("csv", "first line must be the header '" + std::string(kCsvHeader) + "'");
            header_seen = true;
            continue;
        }
        try {
            out.push_back(parse_csv_row(line));
        } catch (const ValidationError& e) {
            throw ValidationError(e.kind(), "line " + std::to_string(line_no), e.what());
        }
    }
    if (!header_seen)
        schema_error("csv", "missing header line");
    return out;
}

}  // namespace ecgiot
