#include "ecgiot/delineation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ecgiot::delineation {

using synth::Wave;

bool BeatAnnotation::valid(Wave w) const
{
    switch (w) {
    case Wave::P: return p_valid;
    case Wave::Q: return q_valid;
    case Wave::R: return r_valid;
    case Wave::S: return s_valid;
    case Wave::T: return t_valid;
    }
    return false;
}

double& WaveScores::operator[](Wave w)
{
    switch (w) {
    case Wave::P: return p;
    case Wave::Q: return q;
    case Wave::R: return r;
    case Wave::S: return s;
    case Wave::T: break;
    }
    return t;
}

double WaveScores::operator[](Wave w) const
{
    return const_cast<WaveScores&>(*this)[w];
}

double round2(double value)
{
    // The epsilon absorbs representation error in decimal inputs such as 96.315.
    return std::floor(value * 100.0 + 0.5 + 1e-9) / 100.0;
}

std::string format_score(double value)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", round2(value));
    std::string s = buf;
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0')
            s.pop_back();
        if (s.back() == '.')
            s.pop_back();
    }
    if (s == "-0")
        s = "0";
    return s;
}

namespace {

std::vector<double> to_signal(std::span<const synth::EcgSample> samples)
{
    std::vector<double> out(samples.size());
    std::transform(samples.begin(), samples.end(), out.begin(),
                   [](const synth::EcgSample& s) { return static_cast<double>(s.adc_code); });
    return out;
}

std::ptrdiff_t to_samples(double seconds, double sample_rate)
{
    return static_cast<std::ptrdiff_t>(std::lround(seconds * sample_rate));
}

double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0)
        m = (m + *std::max_element(v.begin(), mid)) / 2.0;
    return m;
}

// Robust standard deviation of the white-noise component: MAD of the first
// differences, scaled to a Gaussian sigma.
double noise_sigma(std::span<const double> window)
{
    if (window.size() < 3)
        return 0.0;
    std::vector<double> diffs(window.size() - 1);
    for (std::size_t i = 1; i < window.size(); ++i)
        diffs[i - 1] = window[i] - window[i - 1];
    const double med = median(diffs);
    for (auto& d : diffs)
        d = std::abs(d - med);
    return 1.4826 * median(std::move(diffs)) / std::sqrt(2.0);
}

struct Window {
    std::ptrdiff_t first, last;  // inclusive
};

struct Extremum {
    std::size_t index;
    double value;
};

Extremum find_extremum(std::span<const double> signal, Window w, bool maximum)
{
    Extremum best{static_cast<std::size_t>(w.first), signal[static_cast<std::size_t>(w.first)]};
    for (auto i = w.first + 1; i <= w.last; ++i) {
        const double v = signal[static_cast<std::size_t>(i)];
        if (maximum ? v > best.value : v < best.value)
            best = {static_cast<std::size_t>(i), v};
    }
    return best;
}

struct BeatWindows {
    Window p, q, s, t;
    Window span() const { return {p.first, t.last}; }
};

BeatWindows windows_for(std::ptrdiff_t r, double sample_rate, const Params& params)
{
    const auto qs = to_samples(params.qs_window_s, sample_rate);
    const auto p0 = to_samples(params.p_window_start_s, sample_rate);
    const auto t1 = to_samples(params.t_window_end_s, sample_rate);
    return {
        {r - p0 + 1, r - qs - 1},
        {r - qs + 1, r - 1},
        {r + 1, r + qs - 1},
        {r + qs + 1, r + t1 - 1},
    };
}

}  // namespace

std::vector<std::size_t> detect_r_peaks(std::span<const double> signal, double sample_rate, const Params& params)
{
    const auto n = signal.size();
    if (static_cast<double>(n) < params.threshold_window_s * sample_rate)
        throw InsufficientDataError("R-peak detection needs at least " + std::to_string(params.threshold_window_s) +
                                    " s of signal");

    std::vector<double> sum(n + 1, 0.0), sumsq(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        sum[i + 1] = sum[i] + signal[i];
        sumsq[i + 1] = sumsq[i] + signal[i] * signal[i];
    }
    const auto half = static_cast<std::size_t>(std::lround(params.threshold_window_s * sample_rate / 2.0));
    auto threshold = [&](std::size_t i) {
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        const double m = static_cast<double>(hi - lo);
        const double mean = (sum[hi] - sum[lo]) / m;
        const double var = std::max(0.0, (sumsq[hi] - sumsq[lo]) / m - mean * mean);
        return mean + params.threshold_k * std::sqrt(var);
    };

    const auto refractory = static_cast<std::size_t>(std::lround(params.refractory_s * sample_rate));
    const auto t_wave_span = static_cast<std::size_t>(std::lround(params.t_wave_window_s * sample_rate));
    const auto slope_reach = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(params.slope_window_s * sample_rate)));
    auto max_slope = [&](std::size_t i) {
        const std::size_t lo = i > slope_reach ? i - slope_reach : 0;
        const std::size_t hi = std::min(n - 1, i + slope_reach);
        double best = 0.0;
        for (std::size_t k = lo; k < hi; ++k)
            best = std::max(best, std::abs(signal[k + 1] - signal[k]));
        return best;
    };
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(signal[i] > signal[i - 1]))
            continue;
        // Walk a plateau; a peak is a plateau that falls on its right side.
        std::size_t j = i;
        while (j + 1 < n && signal[j + 1] == signal[i])
            ++j;
        if (j + 1 >= n || !(signal[j + 1] < signal[i])) {
            i = j;
            continue;
        }
        const std::size_t peak = (i + j) / 2;
        i = j;
        if (!(signal[peak] > threshold(peak)))
            continue;
        if (!peaks.empty() && peak - peaks.back() < refractory) {
            if (signal[peak] > signal[peaks.back()])
                peaks.back() = peak;
            continue;
        }
        // A shallow candidate soon after a QRS is its T wave.
        if (!peaks.empty() && peak - peaks.back() < t_wave_span &&
            max_slope(peak) < params.t_wave_slope_ratio * max_slope(peaks.back()))
            continue;
        peaks.push_back(peak);
    }
    return peaks;
}

std::vector<std::size_t> detect_r_peaks(std::span<const synth::EcgSample> samples, double sample_rate,
                                        const Params& params)
{
    const auto signal = to_signal(samples);
    return detect_r_peaks(std::span<const double>(signal), sample_rate, params);
}

std::vector<BeatAnnotation> annotate_beats(std::span<const double> signal, std::span<const std::size_t> r_indices,
                                           double sample_rate, const Params& params)
{
    const auto n = static_cast<std::ptrdiff_t>(signal.size());
    auto inside = [n](Window w) { return w.first >= 0 && w.last < n && w.first <= w.last; };

    std::vector<BeatAnnotation> out;
    out.reserve(r_indices.size());
    for (std::size_t r : r_indices) {
        const auto win = windows_for(static_cast<std::ptrdiff_t>(r), sample_rate, params);
        const Window span{std::max<std::ptrdiff_t>(0, win.span().first), std::min(n - 1, win.span().last)};
        const auto local = signal.subspan(static_cast<std::size_t>(span.first),
                                          static_cast<std::size_t>(span.last - span.first + 1));
        const double baseline = median(std::vector<double>(local.begin(), local.end()));
        const double floor = std::max(params.noise_floor_k * noise_sigma(local), params.min_deviation);

        BeatAnnotation a;
        a.r_index = r;
        auto locate = [&](Window w, bool maximum, std::optional<std::size_t>& index, bool& valid) {
            if (!inside(w))
                return;
            const auto e = find_extremum(signal, w, maximum);
            const double deviation = maximum ? e.value - baseline : baseline - e.value;
            if (deviation > floor) {
                valid = true;
                index = e.index;
            }
        };
        locate(win.p, true, a.p_index, a.p_valid);
        locate(win.q, false, a.q_index, a.q_valid);
        locate(win.s, false, a.s_index, a.s_valid);
        locate(win.t, true, a.t_index, a.t_valid);
        out.push_back(a);
    }
    return out;
}

std::vector<BeatAnnotation> annotate_beats(std::span<const synth::EcgSample> samples,
                                           std::span<const std::size_t> r_indices, double sample_rate,
                                           const Params& params)
{
    const auto signal = to_signal(samples);
    return annotate_beats(std::span<const double>(signal), r_indices, sample_rate, params);
}

std::vector<BeatAnnotation> delineate(std::span<const synth::EcgSample> samples, double sample_rate,
                                      const Params& params, bool drop_edge_beats)
{
    const std::size_t n = samples.size();
    const auto min_run = static_cast<std::size_t>(std::ceil(params.threshold_window_s * sample_rate));

    std::vector<BeatAnnotation> out;
    bool searched = false;
    std::size_t begin = 0;
    while (begin < n) {
        while (begin < n && samples[begin].lead_off)
            ++begin;
        std::size_t end = begin;
        while (end < n && !samples[end].lead_off)
            ++end;
        if (end - begin >= min_run && end > begin) {
            searched = true;
            const auto run = samples.subspan(begin, end - begin);
            const auto signal = to_signal(run);
            const auto peaks = detect_r_peaks(std::span<const double>(signal), sample_rate, params);
            const auto beats = annotate_beats(std::span<const double>(signal), peaks, sample_rate, params);
            const auto run_len = static_cast<std::ptrdiff_t>(end - begin);
            for (auto beat : beats) {
                const auto span = windows_for(static_cast<std::ptrdiff_t>(beat.r_index), sample_rate, params).span();
                const bool clipped_left = span.first < 0;
                const bool clipped_right = span.last >= run_len;
                if ((clipped_left && begin > 0) || (clipped_right && end < n))
                    continue;  // reaches into a lead-off gap
                if (drop_edge_beats && (clipped_left || clipped_right))
                    continue;
                beat.r_index += begin;
                for (auto* idx : {&beat.p_index, &beat.q_index, &beat.s_index, &beat.t_index})
                    if (*idx)
                        **idx += begin;
                out.push_back(beat);
            }
        }
        begin = end;
    }
    if (!searched)
        throw InsufficientDataError("no connected run of at least " + std::to_string(params.threshold_window_s) +
                                    " s of signal");
    return out;
}

WaveScores score_waves(std::span<const BeatAnnotation> annotations)
{
    if (annotations.empty())
        throw NoBeatsError("cannot score an empty beat list");
    const auto count = static_cast<std::uint64_t>(annotations.size());
    WaveScores scores;
    for (Wave w : synth::kAllWaves) {
        const auto valid = static_cast<std::uint64_t>(std::count_if(
            annotations.begin(), annotations.end(), [w](const BeatAnnotation& a) { return a.valid(w); }));
        // 100 * valid / count, half-up to hundredths, in exact integer arithmetic.
        const std::uint64_t hundredths = (20000 * valid + count) / (2 * count);
        scores[w] = static_cast<double>(hundredths) / 100.0;
    }
    return scores;
}

}  // namespace ecgiot::delineation
