#include "ecgiot/device_agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ecgiot::device {

std::size_t VectorSampleSource::read(std::span<synth::EcgSample> out)
{
    const std::size_t n = std::min(out.size(), samples_.size() - pos_);
    std::copy_n(samples_.begin() + static_cast<std::ptrdiff_t>(pos_), n, out.begin());
    pos_ += n;
    return n;
}

VectorSampleSource make_synth_source(const synth::SynthConfig& config, const synth::BeatTemplate& beat)
{
    return VectorSampleSource(synth::synthesize(config, beat), config.sample_rate);
}

HeartbeatReading measure_heartbeat(std::span<const double> beat_times, const std::string& patient_id,
                                   TimestampMs measured_at)
{
    const auto count = std::count_if(beat_times.begin(), beat_times.end(),
                                     [](double t) { return t >= 0.0 && t < kHeartbeatWindowSeconds; });
    if (count == 0)
        throw NoPulseError("no pulse detected in the 20 s window; is the finger on the sensor?");
    if (count > 250)
        throw Error("implausible pulse count " + std::to_string(count) + " in 20 s");
    HeartbeatReading r;
    r.patient_id = patient_id;
    r.bpm = static_cast<int>(count) * 3;
    r.window_seconds = static_cast<int>(kHeartbeatWindowSeconds);
    r.measured_at = measured_at;
    return r;
}

bool passes_gate(double overall_score, double threshold)
{
    return overall_score > threshold;
}

DeviceAgent::DeviceAgent(AgentConfig config, Publisher& publisher)
    : config_(std::move(config)), publisher_(publisher), next_record_no_(config_.first_record_no)
{
    if (!is_valid_patient_id(config_.patient_id))
        throw ConfigError("patient_id", "must be 1-64 characters from [A-Za-z0-9_.-]");
    if (config_.age < 1 || config_.age > 120)
        throw ConfigError("age", "must be within [1, 120]");
    if (config_.first_record_no < 1)
        throw ConfigError("first_record_no", "must be positive");
    if (config_.target_beats == 0)
        throw ConfigError("target_beats", "must be positive");
    if (!(config_.timeout_s > 0.0) || !(config_.chunk_s > 0.0))
        throw ConfigError("timeout_s", "timeout and chunk length must be positive");
    if (config_.qos != 0 && config_.qos != 1)
        throw ConfigError("qos", "must be 0 or 1");
}

void DeviceAgent::send(TopicClass cls, nlohmann::json doc, int qos)
{
    const std::string patient = doc.value("patient_id", config_.patient_id);
    char id[48];
    std::snprintf(id, sizeof id, "%016llx-%llu", static_cast<unsigned long long>(config_.nonce),
                  static_cast<unsigned long long>(++message_counter_));
    doc["msg_id"] = id;
    publisher_.publish(make_topic(patient, cls), doc.dump(), qos);
}

void DeviceAgent::send_status(const std::string& event, const std::string& message, std::optional<double> overall)
{
    send(TopicClass::Status, to_json(StatusEvent{config_.patient_id, event, message, overall}), config_.qos);
}

HeartbeatReading DeviceAgent::measure_heartbeat(std::span<const double> beat_times)
{
    try {
        auto reading = device::measure_heartbeat(beat_times, config_.patient_id, config_.clock());
        send(TopicClass::Heartbeat, to_json(reading), config_.qos);
        return reading;
    } catch (const NoPulseError& e) {
        send_status("no_pulse", e.what(), std::nullopt);
        throw;
    }
}

SessionOutcome DeviceAgent::run_ecg_session(SampleSource& source)
{
    const double fs = source.sample_rate();
    const auto chunk_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config_.chunk_s * fs)));
    const auto max_samples = static_cast<std::size_t>(std::floor(config_.timeout_s * fs + 1e-9));

    std::vector<synth::EcgSample> captured;
    std::vector<delineation::BeatAnnotation> beats;
    std::vector<synth::EcgSample> chunk(chunk_len);
    while (captured.size() < max_samples) {
        const auto want = std::min(chunk_len, max_samples - captured.size());
        const auto got = source.read(std::span(chunk).first(want));
        if (got == 0)
            break;
        captured.insert(captured.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(got));

        if (config_.publish_waveform) {
            WaveformChunk wc{config_.patient_id, waveform_seq_++, fs, {}, {}};
            for (std::size_t i = 0; i < got; ++i) {
                wc.samples.push_back(chunk[i].adc_code);
                wc.lead_off.push_back(chunk[i].lead_off);
            }
            send(TopicClass::Waveform, to_json(wc), 0);
        }

        try {
            // Capture boundaries are artificial; beats they clip are not scored.
            beats = delineation::delineate(captured, fs, config_.params, /*drop_edge_beats=*/true);
        } catch (const delineation::InsufficientDataError&) {
            beats.clear();
        }
        if (beats.size() >= config_.target_beats)
            break;
    }

    if (beats.empty()) {
        send_status("no_signal", "no R peaks detected", std::nullopt);
        throw NoSignalError("no R peaks detected within " + std::to_string(config_.timeout_s) + " s");
    }
    if (beats.size() > config_.target_beats)
        beats.resize(config_.target_beats);

    SessionOutcome outcome;
    outcome.beats = beats.size();
    outcome.scores = delineation::score_waves(beats);
    outcome.overall_score = outcome.scores->overall();
    if (passes_gate(outcome.overall_score, config_.gate_threshold)) {
        PqrstRecord record;
        record.record_no = next_record_no_++;
        record.age = config_.age;
        record.p = outcome.scores->p;
        record.q = outcome.scores->q;
        record.r = outcome.scores->r;
        record.s = outcome.scores->s;
        record.t = outcome.scores->t;
        record.patient_id = config_.patient_id;
        record.captured_at = config_.clock();
        send(TopicClass::Pqrst, to_json(record), config_.qos);
        send_status("uploaded", "record " + std::to_string(record.record_no) + " uploaded", outcome.overall_score);
        outcome.status = SessionStatus::Uploaded;
        outcome.message = "uploaded";
        outcome.record = record;
    } else {
        send_status("error", "ERROR", outcome.overall_score);
        outcome.status = SessionStatus::Error;
        outcome.message = "ERROR";
    }
    return outcome;
}

void DeviceAgent::publish_record(const PqrstRecord& record)
{
    PqrstRecord copy = record;
    if (copy.patient_id.empty())
        copy.patient_id = config_.patient_id;
    if (!is_valid_patient_id(copy.patient_id))
        throw ConfigError("patient_id", "invalid patient id '" + copy.patient_id + "'");
    validate(copy);
    send(TopicClass::Pqrst, to_json(copy), config_.qos);
    next_record_no_ = std::max(next_record_no_, record.record_no + 1);
}

}  // namespace ecgiot::device
