#pragma once

// Telemetry documents exchanged between devices, the broker and the store,
// their topic scheme and JSON/CSV encodings.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ecgiot/error.hpp"
#include "ecgiot/timeutil.hpp"

namespace ecgiot {

enum class TopicClass { Heartbeat, Waveform, Pqrst, Status };

const char* topic_class_name(TopicClass c);  // "heartbeat", "waveform", "pqrst", "status"
std::optional<TopicClass> topic_class_from_name(std::string_view name);

// clinic/{patient_id}/{heartbeat|ecg/waveform|ecg/pqrst|status}
std::string make_topic(std::string_view patient_id, TopicClass c);

struct ParsedTopic {
    std::string patient_id;
    TopicClass topic_class;
};
std::optional<ParsedTopic> parse_topic(std::string_view topic);

// 1-64 characters from [A-Za-z0-9_.-].
bool is_valid_patient_id(std::string_view id);

// A payload failed validation. Schema errors (missing field, wrong type) and
// range errors (well-typed but outside its invariant) are distinguished.
class ValidationError : public Error {
public:
    enum class Kind { Schema, Range };

    ValidationError(Kind kind, std::string field, const std::string& detail)
        : Error(field + ": " + detail), kind_(kind), field_(std::move(field)) {}

    Kind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }

private:
    Kind kind_;
    std::string field_;
};

struct HeartbeatReading {
    std::string patient_id;
    int bpm = 0;
    int window_seconds = 20;
    TimestampMs measured_at = 0;

    friend bool operator==(const HeartbeatReading&, const HeartbeatReading&) = default;
};

struct PqrstRecord {
    int record_no = 1;
    int age = 1;
    double p = 0, q = 0, r = 0, s = 0, t = 0;
    std::string patient_id;
    TimestampMs captured_at = 0;

    double mean_score() const { return (p + q + r + s + t) / 5.0; }

    friend bool operator==(const PqrstRecord&, const PqrstRecord&) = default;
};

struct WaveformChunk {
    std::string patient_id;
    std::uint64_t seq = 0;
    double sample_rate = 250.0;
    std::vector<std::uint32_t> samples;
    std::vector<bool> lead_off;

    friend bool operator==(const WaveformChunk&, const WaveformChunk&) = default;
};

struct StatusEvent {
    std::string patient_id;
    std::string event;  // "uploaded", "error", "no_signal", "no_pulse"
    std::string message;
    std::optional<double> overall_score;

    friend bool operator==(const StatusEvent&, const StatusEvent&) = default;
};

nlohmann::json to_json(const HeartbeatReading& r);
nlohmann::json to_json(const PqrstRecord& r);
nlohmann::json to_json(const WaveformChunk& c);
nlohmann::json to_json(const StatusEvent& e);

// Parse and validate; throw ValidationError with the offending field.
HeartbeatReading heartbeat_from_json(const nlohmann::json& j);
PqrstRecord pqrst_from_json(const nlohmann::json& j);
WaveformChunk waveform_from_json(const nlohmann::json& j);
StatusEvent status_from_json(const nlohmann::json& j);

// Validates a document against the schema of its topic class and returns the
// patient id it carries.
std::string validate_document(TopicClass c, const nlohmann::json& doc);

void validate(const PqrstRecord& r);

inline constexpr std::string_view kCsvHeader = "Record No,Age,P,Q,R,S,T";

// "record_no,age,p,q,r,s,t" with scores rendered to two decimals, trailing
// zeros trimmed.
std::string to_csv_row(const PqrstRecord& r);
PqrstRecord parse_csv_row(std::string_view line);

// Whole-file helpers. parse_csv requires the header line.
std::string to_csv(const std::vector<PqrstRecord>& records);
std::vector<PqrstRecord> parse_csv(std::string_view text);

}  // namespace ecgiot
