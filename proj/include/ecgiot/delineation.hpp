#pragma once

// R-peak detection, PQRST fiducial search and per-wave detection scores.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgiot/error.hpp"
#include "ecgiot/signal_synth.hpp"

namespace ecgiot::delineation {

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class NoBeatsError : public Error {
public:
    using Error::Error;
};

struct Params {
    double threshold_window_s = 2.0;  // sliding window for mean + k*std
    double threshold_k = 2.0;
    double refractory_s = 0.200;
    // Candidates within t_wave_window_s of the previous R whose steepest
    // slope (within +-slope_window_s) is below this fraction of that R's
    // are taken as T waves.
    double t_wave_window_s = 0.360;
    double t_wave_slope_ratio = 0.5;
    double slope_window_s = 0.040;
    double qs_window_s = 0.080;     // Q in (R-80ms, R), S in (R, R+80ms)
    double p_window_start_s = 0.240;  // P in (R-240ms, R-80ms)
    double t_window_end_s = 0.400;    // T in (R+80ms, R+400ms)
    double noise_floor_k = 3.0;
    double min_deviation = 1.0;  // in ADC counts; floor for noise-free input
};

struct BeatAnnotation {
    std::size_t r_index = 0;
    std::optional<std::size_t> p_index, q_index, s_index, t_index;
    bool p_valid = false;
    bool q_valid = false;
    bool r_valid = true;
    bool s_valid = false;
    bool t_valid = false;

    bool valid(synth::Wave w) const;
};

struct WaveScores {
    double p = 0, q = 0, r = 0, s = 0, t = 0;

    double& operator[](synth::Wave w);
    double operator[](synth::Wave w) const;
    // Unweighted mean of the five scores.
    double overall() const { return (p + q + r + s + t) / 5.0; }

    friend bool operator==(const WaveScores&, const WaveScores&) = default;
};

// Rounds half-up to two decimals.
double round2(double value);

// Two-decimal rendering with trailing zeros trimmed: 91.60 -> "91.6", 100.00 -> "100".
std::string format_score(double value);

std::vector<std::size_t> detect_r_peaks(std::span<const double> signal, double sample_rate,
                                        const Params& params = {});
std::vector<std::size_t> detect_r_peaks(std::span<const synth::EcgSample> samples, double sample_rate,
                                        const Params& params = {});

std::vector<BeatAnnotation> annotate_beats(std::span<const double> signal, std::span<const std::size_t> r_indices,
                                           double sample_rate, const Params& params = {});
std::vector<BeatAnnotation> annotate_beats(std::span<const synth::EcgSample> samples,
                                           std::span<const std::size_t> r_indices, double sample_rate,
                                           const Params& params = {});

// Full pipeline over a stream that may contain lead-off samples. The record
// is split into runs of connected samples; each run of at least the
// threshold window is searched independently. Beats whose windows reach into
// a lead-off gap are dropped. With drop_edge_beats, beats clipped by the
// record edges are dropped too instead of being reported with invalid waves.
std::vector<BeatAnnotation> delineate(std::span<const synth::EcgSample> samples, double sample_rate,
                                      const Params& params = {}, bool drop_edge_beats = false);

WaveScores score_waves(std::span<const BeatAnnotation> annotations);

}  // namespace ecgiot::delineation
