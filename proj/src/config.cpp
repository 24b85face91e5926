#include "ecgiot/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace ecgiot {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

double parse_double(const std::string& key, std::string_view v)
{
    double out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError(key, "expected a number, got '" + std::string(v) + "'");
    return out;
}

using Setter = std::function<void(const std::string& key, std::string_view value, std::size_t line_no)>;

void for_each_setting(std::string_view text, const Setter& set)
{
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        set(std::string(trim(line.substr(0, eq))), trim(line.substr(eq + 1)), line_no);
    }
}

std::string read_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config", "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] void unknown_key(const std::string& key, std::size_t line_no)
{
    throw ConfigError(key, "unknown key (line " + std::to_string(line_no) + ")");
}

}  // namespace

void GatewayConfig::validate() const
{
    if (http_listen.port != 0 && http_listen.port == mqtt_listen.port)
        throw ConfigError("mqtt_listen", "port must differ from http_listen");
    if (store_root.empty())
        throw ConfigError("store_root", "must not be empty");
    try {
        quality.validate();
    } catch (const ConfigError& e) {
        throw ConfigError("quality_acceptable", e.what());
    }
    if (!(gate_threshold >= 0 && gate_threshold <= 100))
        throw ConfigError("gate_threshold", "must lie within [0, 100]");
    if (mqtt_username.has_value() != mqtt_password.has_value())
        throw ConfigError("mqtt_password", "username and password must be set together");
    if (log_level != "trace" && log_level != "debug" && log_level != "info" && log_level != "warn" &&
        log_level != "error" && log_level != "off")
        throw ConfigError("log_level", "unknown level '" + log_level + "'");
}

void apply_config_text(GatewayConfig& cfg, std::string_view text)
{
    for_each_setting(text, [&](const std::string& key, std::string_view value, std::size_t line_no) {
        const std::string v(value);
        if (key == "http_listen")
            cfg.http_listen = net::parse_endpoint(v, key);
        else if (key == "mqtt_listen")
            cfg.mqtt_listen = net::parse_endpoint(v, key);
        else if (key == "store_root")
            cfg.store_root = v;
        else if (key == "quality_excellent")
            cfg.quality.excellent = parse_double(key, value);
        else if (key == "quality_acceptable")
            cfg.quality.acceptable = parse_double(key, value);
        else if (key == "gate_threshold")
            cfg.gate_threshold = parse_double(key, value);
        else if (key == "model_path")
            cfg.model_path = v.empty() ? std::nullopt : std::optional<std::filesystem::path>(v);
        else if (key == "mqtt_username")
            cfg.mqtt_username = v;
        else if (key == "mqtt_password")
            cfg.mqtt_password = v;
        else if (key == "log_level")
            cfg.log_level = v;
        else
            unknown_key(key, line_no);
    });
}

GatewayConfig load_config(const std::filesystem::path& path)
{
    GatewayConfig cfg;
    apply_config_text(cfg, read_config_file(path));
    return cfg;
}

void apply_env_overrides(GatewayConfig& cfg)
{
    if (const char* root = std::getenv("ECGIOT_STORE_ROOT"); root && *root)
        cfg.store_root = root;
}

synth::LeadOffInterval parse_lead_off(const std::string& key, std::string_view v)
{
    const auto colon = v.find(':');
    if (colon == std::string_view::npos)
        throw ConfigError(key, "expected start:end seconds, got '" + std::string(v) + "'");
    synth::LeadOffInterval iv{parse_double(key, trim(v.substr(0, colon))), parse_double(key, trim(v.substr(colon + 1)))};
    if (!(iv.end_s > iv.start_s))
        throw ConfigError(key, "end must be after start");
    return iv;
}

void apply_synth_config_text(synth::SynthConfig& cfg, synth::BeatTemplate& beat, std::string_view text)
{
    for_each_setting(text, [&](const std::string& key, std::string_view value, std::size_t line_no) {
        if (key == "sample_rate")
            cfg.sample_rate = parse_double(key, value);
        else if (key == "heart_rate")
            cfg.heart_rate = parse_double(key, value);
        else if (key == "duration")
            cfg.duration = parse_double(key, value);
        else if (key == "baseline_mv")
            cfg.baseline_mv = parse_double(key, value);
        else if (key == "noise_std_mv")
            cfg.noise_std_mv = parse_double(key, value);
        else if (key == "frontend_gain")
            cfg.frontend_gain = parse_double(key, value);
        else if (key == "adc_reference")
            cfg.adc_reference = parse_double(key, value);
        else if (key == "adc_bits")
            cfg.adc_bits = static_cast<int>(parse_double(key, value));
        else if (key == "seed")
            cfg.seed = static_cast<std::uint64_t>(parse_double(key, value));
        else if (key == "first_beat_s")
            cfg.first_beat_s = parse_double(key, value);
        else if (key == "lead_off")
            cfg.lead_off_intervals.push_back(parse_lead_off(key, value));
        else if (key.size() > 2 && key[1] == '_' && std::string_view("pqrst").find(key[0]) != std::string_view::npos) {
            auto& w = beat.waves[std::string_view("pqrst").find(key[0])];
            const auto field = key.substr(2);
            if (field == "amplitude_mv")
                w.amplitude_mv = parse_double(key, value);
            else if (field == "center_s")
                w.center_s = parse_double(key, value);
            else if (field == "sigma_s")
                w.sigma_s = parse_double(key, value);
            else
                unknown_key(key, line_no);
        } else {
            unknown_key(key, line_no);
        }
    });
    cfg.validate();
    beat.validate();
}

void load_synth_config(const std::filesystem::path& path, synth::SynthConfig& cfg, synth::BeatTemplate& beat)
{
    apply_synth_config_text(cfg, beat, read_config_file(path));
}

}  // namespace ecgiot
