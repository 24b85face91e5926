#include "ecgiot/signal_synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ecgiot/error.hpp"

namespace ecgiot::synth {

const char* wave_name(Wave w)
{
    static constexpr const char* names[] = {"P", "Q", "R", "S", "T"};
    return names[static_cast<std::size_t>(w)];
}

BeatTemplate BeatTemplate::standard()
{
    BeatTemplate b;
    b[Wave::P] = {0.15, -0.20, 0.025};
    b[Wave::Q] = {-0.10, -0.040, 0.010};
    b[Wave::R] = {1.00, 0.0, 0.012};
    b[Wave::S] = {-0.20, 0.040, 0.010};
    b[Wave::T] = {0.30, 0.25, 0.045};
    return b;
}

void BeatTemplate::validate() const
{
    for (Wave w : kAllWaves) {
        const auto& shape = (*this)[w];
        const std::string name = wave_name(w);
        if (!(shape.sigma_s > 0.0))
            throw ConfigError(name + ".sigma", "must be > 0");
        const bool negative_wave = (w == Wave::Q || w == Wave::S);
        if (negative_wave && shape.amplitude_mv > 0.0)
            throw ConfigError(name + ".amplitude", "must be <= 0");
        if (!negative_wave && shape.amplitude_mv < 0.0)
            throw ConfigError(name + ".amplitude", "must be >= 0");
    }
    if ((*this)[Wave::R].center_s != 0.0)
        throw ConfigError("R.center", "must be 0");
    for (std::size_t i = 1; i < waves.size(); ++i)
        if (!(waves[i - 1].center_s < waves[i].center_s))
            throw ConfigError(std::string(wave_name(kAllWaves[i])) + ".center",
                              "wave centers must be strictly ordered P < Q < R < S < T");
}

bool SynthConfig::in_lead_off(double t) const
{
    return std::any_of(lead_off_intervals.begin(), lead_off_intervals.end(),
                       [t](const LeadOffInterval& iv) { return iv.contains(t); });
}

void SynthConfig::validate() const
{
    if (!(sample_rate >= 100.0))
        throw ConfigError("sample_rate", "must be >= 100");
    if (!(heart_rate >= 20.0 && heart_rate <= 250.0))
        throw ConfigError("heart_rate", "must be within [20, 250]");
    if (!(duration >= 0.0) || !std::isfinite(duration))
        throw ConfigError("duration", "must be a finite value >= 0");
    if (!(noise_std_mv >= 0.0))
        throw ConfigError("noise_std_mv", "must be >= 0");
    if (adc_bits < 8 || adc_bits > 16)
        throw ConfigError("adc_bits", "must be within [8, 16]");
    if (!(adc_reference > 0.0))
        throw ConfigError("adc_reference", "must be > 0");
    if (!(frontend_gain > 0.0))
        throw ConfigError("frontend_gain", "must be > 0");
    if (!std::isfinite(baseline_mv))
        throw ConfigError("baseline_mv", "must be finite");
    for (const auto& iv : lead_off_intervals)
        if (!(iv.start_s <= iv.end_s))
            throw ConfigError("lead_off_intervals", "interval start must not exceed its end");
    if (first_beat_s && !(*first_beat_s >= 0.0))
        throw ConfigError("first_beat_s", "must be >= 0");
}

std::uint32_t quantize(double voltage_mv, double adc_reference, int adc_bits)
{
    const double full_scale = std::ldexp(1.0, adc_bits);
    const double code = std::floor(voltage_mv / 1000.0 / adc_reference * full_scale);
    if (!(code > 0.0))
        return 0;
    if (code >= full_scale - 1.0)
        return static_cast<std::uint32_t>(full_scale - 1.0);
    return static_cast<std::uint32_t>(code);
}

std::size_t sample_count(const SynthConfig& config)
{
    return static_cast<std::size_t>(std::floor(config.sample_rate * config.duration + 1e-9));
}

namespace {

double template_reach(const BeatTemplate& beat)
{
    double reach = 0.0;
    for (const auto& w : beat.waves)
        reach = std::max(reach, std::abs(w.center_s) + 8.0 * w.sigma_s);
    return reach;
}

double beat_value(const BeatTemplate& beat, double dt)
{
    double v = 0.0;
    for (const auto& w : beat.waves) {
        const double z = (dt - w.center_s) / w.sigma_s;
        v += w.amplitude_mv * std::exp(-0.5 * z * z);
    }
    return v;
}

double electrode_mv_with_reach(const SynthConfig& config, const BeatTemplate& beat, double t, double reach)
{
    const double period = config.beat_period();
    const double first = config.first_beat();
    const double lo = std::ceil((t - reach - first) / period);
    const double hi = std::floor((t + reach - first) / period);
    double v = 0.0;
    for (double k = std::max(lo, 0.0); k <= hi; k += 1.0) {
        const double r_time = first + k * period;
        if (r_time >= config.duration)
            break;
        v += beat_value(beat, t - r_time);
    }
    return v;
}

}  // namespace

double electrode_mv(const SynthConfig& config, const BeatTemplate& beat, double t)
{
    return electrode_mv_with_reach(config, beat, t, template_reach(beat));
}

std::vector<EcgSample> synthesize(const SynthConfig& config, const BeatTemplate& beat)
{
    config.validate();
    beat.validate();

    const std::size_t n = sample_count(config);
    const double reach = template_reach(beat);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<EcgSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / config.sample_rate;
        double mv = electrode_mv_with_reach(config, beat, t, reach);
        if (config.noise_std_mv > 0.0)
            mv += config.noise_std_mv * noise(rng);
        EcgSample s{t, 0, config.in_lead_off(t)};
        s.adc_code = s.lead_off ? config.adc_max()
                                : quantize(config.baseline_mv + config.frontend_gain * mv, config.adc_reference,
                                           config.adc_bits);
        out.push_back(s);
    }
    return out;
}

std::vector<double> pulse_events(const SynthConfig& config)
{
    config.validate();
    std::vector<double> events;
    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * 60.0 / config.heart_rate;
        if (t >= config.duration)
            break;
        if (!config.in_lead_off(t))
            events.push_back(t);
    }
    return events;
}

}  // namespace ecgiot::synth
