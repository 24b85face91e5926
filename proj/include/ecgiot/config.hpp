#pragma once

// Runtime configuration for `serve`, read from a key=value file.
//
//   # comment
//   http_listen = 0.0.0.0:8080
//   mqtt_listen = 0.0.0.0:1883
//   store_root = /var/lib/ecgiot
//   quality_excellent = 96
//   quality_acceptable = 85
//   gate_threshold = 80
//   model_path = /etc/ecgiot/model.json
//   mqtt_username = device
//   mqtt_password = secret
//   log_level = info
//
// ECGIOT_STORE_ROOT overrides store_root.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ecgiot/analytics.hpp"
#include "ecgiot/net/socket.hpp"
#include "ecgiot/signal_synth.hpp"

namespace ecgiot {

struct GatewayConfig {
    net::Endpoint http_listen{"0.0.0.0", 8080};
    net::Endpoint mqtt_listen{"0.0.0.0", 1883};
    std::filesystem::path store_root = "ecgiot-data";
    analytics::QualityThresholds quality{};
    double gate_threshold = 80.0;
    std::optional<std::filesystem::path> model_path;
    std::optional<std::string> mqtt_username;
    std::optional<std::string> mqtt_password;
    std::string log_level = "info";

    // Throws ConfigError naming the offending key.
    void validate() const;
};

// Applies key=value lines on top of cfg. Unknown keys are errors.
void apply_config_text(GatewayConfig& cfg, std::string_view text);
GatewayConfig load_config(const std::filesystem::path& path);
void apply_env_overrides(GatewayConfig& cfg);

// Synthesis settings for simulate-device, same file format:
//
//   heart_rate = 72
//   noise_std_mv = 0.02
//   sample_rate = 250
//   lead_off = 12.5:15        (repeatable)
//   t_amplitude_mv = 0.1      ({p,q,r,s,t}_{amplitude_mv,center_s,sigma_s})
//
// Also: duration, baseline_mv, frontend_gain, adc_reference, adc_bits, seed,
// first_beat_s.
// "start:end" in seconds; key names the setting in errors.
synth::LeadOffInterval parse_lead_off(const std::string& key, std::string_view spec);

void apply_synth_config_text(synth::SynthConfig& cfg, synth::BeatTemplate& beat, std::string_view text);
void load_synth_config(const std::filesystem::path& path, synth::SynthConfig& cfg, synth::BeatTemplate& beat);

}  // namespace ecgiot
