#pragma once

// Software stand-in for the bedside firmware: a 20-second heartbeat count,
// an ECG capture session gated on its overall score, and publication of the
// results on the clinic/{patient}/... topics.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgiot/delineation.hpp"
#include "ecgiot/error.hpp"
#include "ecgiot/publisher.hpp"
#include "ecgiot/records.hpp"
#include "ecgiot/signal_synth.hpp"
#include "ecgiot/timeutil.hpp"

namespace ecgiot::device {

class NoPulseError : public Error {
public:
    using Error::Error;
};

class NoSignalError : public Error {
public:
    using Error::Error;
};

inline constexpr double kHeartbeatWindowSeconds = 20.0;

using ecgiot::Publisher;

class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual double sample_rate() const = 0;
    // Fills a prefix of out; returns the number of samples written, 0 once exhausted.
    virtual std::size_t read(std::span<synth::EcgSample> out) = 0;
};

class VectorSampleSource final : public SampleSource {
public:
    VectorSampleSource(std::vector<synth::EcgSample> samples, double sample_rate)
        : samples_(std::move(samples)), sample_rate_(sample_rate) {}

    double sample_rate() const override { return sample_rate_; }
    std::size_t read(std::span<synth::EcgSample> out) override;

private:
    std::vector<synth::EcgSample> samples_;
    double sample_rate_;
    std::size_t pos_ = 0;
};

VectorSampleSource make_synth_source(const synth::SynthConfig& config, const synth::BeatTemplate& beat);

// Counts pulse events in [0, 20 s); bpm = count * 3.
HeartbeatReading measure_heartbeat(std::span<const double> beat_times, const std::string& patient_id,
                                   TimestampMs measured_at);

enum class SessionStatus { Uploaded, Error };

struct SessionOutcome {
    SessionStatus status = SessionStatus::Error;
    double overall_score = 0.0;  // unrounded mean of the five wave scores
    std::optional<delineation::WaveScores> scores;
    std::string message;
    std::optional<PqrstRecord> record;  // set when uploaded
    std::size_t beats = 0;
};

// Upload iff overall > threshold (strict).
bool passes_gate(double overall_score, double threshold = 80.0);

struct AgentConfig {
    std::string patient_id;
    int age = 30;
    int first_record_no = 1;
    double gate_threshold = 80.0;
    std::size_t target_beats = 50;
    double timeout_s = 60.0;
    double chunk_s = 1.0;
    bool publish_waveform = true;
    int qos = 1;
    std::uint64_t nonce = 0;  // distinguishes message ids across agent restarts
    delineation::Params params{};
    Clock clock = system_now_ms;
};

class DeviceAgent {
public:
    DeviceAgent(AgentConfig config, Publisher& publisher);

    // Publishes the reading, or a no_pulse status event before throwing NoPulseError.
    HeartbeatReading measure_heartbeat(std::span<const double> beat_times);

    // Captures until target_beats complete beats are seen or timeout_s of
    // signal elapses. Throws NoSignalError when no beat is found.
    SessionOutcome run_ecg_session(SampleSource& source);

    // Publishes an already scored record, e.g. when replaying a dataset.
    void publish_record(const PqrstRecord& record);

    const AgentConfig& config() const { return config_; }
    int next_record_no() const { return next_record_no_; }

private:
    void send(TopicClass cls, nlohmann::json doc, int qos);
    void send_status(const std::string& event, const std::string& message, std::optional<double> overall);

    AgentConfig config_;
    Publisher& publisher_;
    int next_record_no_;
    std::uint64_t message_counter_ = 0;
    std::uint64_t waveform_seq_ = 0;
};

}  // namespace ecgiot::device
