#pragma once

// Synthetic single-lead ECG and pulse-sensor streams.
//
// A beat is the sum of five Gaussian bumps (P, Q, R, S, T) placed relative
// to the R peak. The analog chain mimics an AD8232-style front end: the
// electrode signal is amplified, biased to mid-rail and sampled by an ADC.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ecgiot/error.hpp"

namespace ecgiot::synth {

enum class Wave : std::size_t { P = 0, Q = 1, R = 2, S = 3, T = 4 };

inline constexpr std::array<Wave, 5> kAllWaves{Wave::P, Wave::Q, Wave::R, Wave::S, Wave::T};

const char* wave_name(Wave w);

struct WaveShape {
    double amplitude_mv = 0.0;
    double center_s = 0.0;  // offset from the R peak
    double sigma_s = 0.01;
};

struct BeatTemplate {
    std::array<WaveShape, 5> waves{};

    WaveShape& operator[](Wave w) { return waves[static_cast<std::size_t>(w)]; }
    const WaveShape& operator[](Wave w) const { return waves[static_cast<std::size_t>(w)]; }

    // Textbook lead-II magnitudes.
    static BeatTemplate standard();

    // Throws ConfigError naming the first offending field.
    void validate() const;
};

struct LeadOffInterval {
    double start_s = 0.0;
    double end_s = 0.0;  // exclusive

    bool contains(double t) const { return t >= start_s && t < end_s; }
};

struct SynthConfig {
    double sample_rate = 250.0;  // Hz
    double heart_rate = 60.0;    // BPM
    double duration = 10.0;      // seconds
    double baseline_mv = 1650.0; // output bias, mid-rail of a 3.3 V supply
    double noise_std_mv = 0.0;   // at the electrode, before gain
    double frontend_gain = 1100.0;
    double adc_reference = 5.0;  // volts
    int adc_bits = 10;
    std::vector<LeadOffInterval> lead_off_intervals;
    std::uint64_t seed = 1;
    // Time of the first R peak. Defaults to half a beat period so that the
    // first and last beats sit away from the record edges.
    std::optional<double> first_beat_s;

    double beat_period() const { return 60.0 / heart_rate; }
    double first_beat() const { return first_beat_s.value_or(beat_period() / 2.0); }
    std::uint32_t adc_max() const { return (1u << adc_bits) - 1u; }
    bool in_lead_off(double t) const;

    void validate() const;
};

struct EcgSample {
    double timestamp = 0.0;  // seconds since session start
    std::uint32_t adc_code = 0;
    bool lead_off = false;

    friend bool operator==(const EcgSample&, const EcgSample&) = default;
};

// floor(mv / 1000 / reference * 2^bits) clamped to [0, 2^bits - 1].
std::uint32_t quantize(double voltage_mv, double adc_reference, int adc_bits);

// Noise-free electrode voltage of the configured beat train at time t.
double electrode_mv(const SynthConfig& config, const BeatTemplate& beat, double t);

std::vector<EcgSample> synthesize(const SynthConfig& config, const BeatTemplate& beat);

// Pulse-sensor beat timestamps k * 60/heart_rate in [0, duration), minus
// those inside a lead-off interval.
std::vector<double> pulse_events(const SynthConfig& config);

std::size_t sample_count(const SynthConfig& config);

}  // namespace ecgiot::synth
