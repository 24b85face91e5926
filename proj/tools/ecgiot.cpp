// ecgiot: broker + store + gateway server, device simulator and dataset tools.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ecgiot/analytics.hpp"
#include "ecgiot/config.hpp"
#include "ecgiot/device_agent.hpp"
#include "ecgiot/gateway.hpp"
#include "ecgiot/ingest.hpp"
#include "ecgiot/mqtt/broker.hpp"
#include "ecgiot/mqtt/client.hpp"
#include "ecgiot/record_store.hpp"
#include "ecgiot/regression.hpp"

using namespace ecgiot;

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out)
        throw Error("cannot write " + path);
}

std::filesystem::path store_root_or_env(const std::string& flag)
{
    if (!flag.empty())
        return flag;
    if (const char* env = std::getenv("ECGIOT_STORE_ROOT"); env && *env)
        return env;
    throw ConfigError("store-root", "pass --store-root or set ECGIOT_STORE_ROOT");
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty())
            out.push_back(item);
    return out;
}

std::vector<std::size_t> parse_indices(const std::string& text)
{
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) {
        std::size_t used = 0;
        const auto v = std::stoul(item, &used);
        if (used != item.size())
            throw ConfigError("test-indices", "not an index: '" + item + "'");
        out.push_back(v);
    }
    return out;
}

mqtt::ClientConfig client_config(const std::string& endpoint, const std::string& client_id,
                                 const std::string& username, const std::string& password)
{
    mqtt::ClientConfig cc;
    cc.broker = net::parse_endpoint(endpoint, "mqtt");
    if (cc.broker.host == "0.0.0.0")
        cc.broker.host = "127.0.0.1";
    cc.client_id = client_id;
    if (!username.empty()) {
        cc.username = username;
        cc.password = password;
    }
    return cc;
}

// serve -----------------------------------------------------------------

struct ServeArgs {
    std::string config_path;
    std::string http, mqtt, store_root, model;
    std::optional<std::string> log_level;  // --log-level given explicitly
};

int run_serve(const ServeArgs& a)
{
    GatewayConfig cfg;
    if (!a.config_path.empty())
        cfg = load_config(a.config_path);
    apply_env_overrides(cfg);
    if (!a.http.empty())
        cfg.http_listen = net::parse_endpoint(a.http, "http");
    if (!a.mqtt.empty())
        cfg.mqtt_listen = net::parse_endpoint(a.mqtt, "mqtt");
    if (!a.store_root.empty())
        cfg.store_root = a.store_root;
    if (!a.model.empty())
        cfg.model_path = a.model;
    if (a.log_level)
        cfg.log_level = *a.log_level;
    cfg.validate();
    spdlog::set_level(spdlog::level::from_str(cfg.log_level));

    // Block termination signals before any thread starts so sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    store::RecordStore store(cfg.store_root);
    auto sink = std::make_shared<StoreSink>(store);

    mqtt::BrokerConfig bc;
    bc.listen = cfg.mqtt_listen;
    bc.username = cfg.mqtt_username;
    bc.password = cfg.mqtt_password;
    bc.require_sink = true;
    mqtt::Broker broker(bc);
    broker.attach_sink(sink);
    broker.start();

    GatewayOptions go;
    go.listen = cfg.http_listen;
    go.quality = cfg.quality;
    if (cfg.model_path)
        go.model = regression::load_model(*cfg.model_path);
    Gateway gateway(go, store);
    gateway.start();

    spdlog::info("serving: mqtt {}:{}, http {}:{}, store {} ({} documents)", cfg.mqtt_listen.host, broker.port(),
                 cfg.http_listen.host, gateway.port(), cfg.store_root.string(), store.size());
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, shutting down", sig);
    gateway.stop();
    broker.stop();
    return 0;
}

// simulate-device -------------------------------------------------------

struct SimulateArgs {
    std::string mqtt = "127.0.0.1:1883";
    std::string username, password;
    std::string patient = "p1";
    int age = 30;
    std::optional<double> heart_rate;
    std::optional<double> noise_mv;
    double timeout = 60;
    int sessions = 1;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> lead_off;
    std::string mode = "both";
    std::string synth_config;
};

int run_simulate(const SimulateArgs& a)
{
    mqtt::Client client(client_config(a.mqtt, "sim-" + a.patient, a.username, a.password));
    client.connect();

    device::AgentConfig ac;
    ac.patient_id = a.patient;
    ac.age = a.age;
    ac.timeout_s = a.timeout;
    ac.nonce = std::random_device{}() ^ (static_cast<std::uint64_t>(system_now_ms()) << 20);
    device::DeviceAgent agent(ac, client);

    // Command-line values go on top of the file.
    synth::SynthConfig sc;
    auto beat = synth::BeatTemplate::standard();
    if (!a.synth_config.empty())
        load_synth_config(a.synth_config, sc, beat);
    if (a.heart_rate)
        sc.heart_rate = *a.heart_rate;
    if (a.noise_mv)
        sc.noise_std_mv = *a.noise_mv;
    for (const auto& spec : a.lead_off)
        sc.lead_off_intervals.push_back(parse_lead_off("lead-off", spec));
    sc.validate();
    const bool do_heartbeat = a.mode != "ecg";
    const bool do_ecg = a.mode != "heartbeat";
    const auto base_seed = a.seed.value_or(sc.seed);

    int failures = 0;
    for (int i = 0; i < a.sessions; ++i) {
        sc.seed = base_seed + static_cast<std::uint64_t>(i);

        sc.duration = device::kHeartbeatWindowSeconds;
        if (do_heartbeat) {
            try {
                const auto hb = agent.measure_heartbeat(synth::pulse_events(sc));
                std::printf("heartbeat: %d bpm\n", hb.bpm);
            } catch (const device::NoPulseError& e) {
                std::printf("heartbeat: no pulse (%s)\n", e.what());
            }
        }

        if (!do_ecg)
            continue;
        sc.duration = a.timeout;
        auto source = device::make_synth_source(sc, beat);
        try {
            const auto out = agent.run_ecg_session(source);
            const auto& s = *out.scores;
            std::printf("ecg: %zu beats, P %s Q %s R %s S %s T %s, overall %.2f -> %s\n", out.beats,
                        delineation::format_score(s.p).c_str(), delineation::format_score(s.q).c_str(),
                        delineation::format_score(s.r).c_str(), delineation::format_score(s.s).c_str(),
                        delineation::format_score(s.t).c_str(), out.overall_score, out.message.c_str());
            if (out.status != device::SessionStatus::Uploaded)
                ++failures;
        } catch (const device::NoSignalError& e) {
            std::printf("ecg: %s\n", e.what());
            ++failures;
        }
    }
    client.disconnect();
    return failures == 0 ? 0 : 2;
}

// ingest-csv / export-csv ----------------------------------------------------

struct IngestArgs {
    std::string csv;
    std::string mqtt;
    std::string store_root;
    std::string patient = "dataset";
    std::string username, password;
};

int run_ingest(const IngestArgs& a)
{
    const auto records = parse_csv(read_file(a.csv));
    device::AgentConfig ac;
    ac.patient_id = a.patient;
    ac.nonce = std::random_device{}() ^ (static_cast<std::uint64_t>(system_now_ms()) << 20);

    if (!a.mqtt.empty()) {
        mqtt::Client client(client_config(a.mqtt, "ingest-" + a.patient, a.username, a.password));
        client.connect();
        device::DeviceAgent agent(ac, client);
        for (const auto& r : records)
            agent.publish_record(r);
        client.disconnect();
    } else {
        store::RecordStore store(store_root_or_env(a.store_root));
        IngestPublisher publisher(store);
        device::DeviceAgent agent(ac, publisher);
        for (const auto& r : records)
            agent.publish_record(r);
    }
    std::printf("published %zu records\n", records.size());
    return 0;
}

int run_export(const std::string& store_root, const std::string& patient, const std::string& out)
{
    store::RecordStore store(store_root_or_env(store_root));
    const auto csv = store.export_csv(patient.empty() ? std::nullopt : std::optional<std::string>(patient));
    if (out.empty())
        std::cout << csv;
    else
        write_file(out, csv);
    return 0;
}

// analyze / fit / predict ---------------------------------------------------

struct AnalyzeArgs {
    std::string csv;
    bool drop_outliers = false;
    std::vector<std::string> reports;
    int round = -1;
    bool json = false;
    std::string out_dir;
    double excellent = 96.0, acceptable = 85.0;
};

int run_analyze(const AnalyzeArgs& a)
{
    auto data = analytics::Dataset::from_csv(read_file(a.csv));
    if (a.drop_outliers) {
        const auto before = data.size();
        data = analytics::drop_outliers(data);
        std::fprintf(stderr, "dropped %zu outlier rows of %zu\n", before - data.size(), before);
    }
    const auto report = analytics::analyze(data, {a.excellent, a.acceptable});
    if (a.json) {
        std::cout << analytics::to_json(report).dump(2) << '\n';
        return 0;
    }
    const std::optional<int> decimals = a.round >= 0 ? std::optional<int>(a.round) : std::nullopt;
    std::vector<std::string> kinds = a.reports;
    if (kinds.empty())
        kinds = {"stats", "corr", "cov", "rank", "quality"};
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        const auto kind = analytics::report_kind_from_name(kinds[i]);
        if (!kind)
            throw ConfigError("report", "unknown report '" + kinds[i] + "'");
        if (i > 0)
            std::cout << '\n';
        std::cout << "== " << kinds[i] << " ==\n" << analytics::render_text(report, *kind, decimals);
        if (!a.out_dir.empty()) {
            std::filesystem::create_directories(a.out_dir);
            write_file((std::filesystem::path(a.out_dir) / (kinds[i] + ".csv")).string(),
                       analytics::render_csv(report, *kind, decimals));
        }
    }
    return 0;
}

struct FitArgs {
    std::string csv;
    std::string target = "R";
    std::string predictors = "S,T,Age";
    std::string test_indices = "2,5,17,19,12";
    std::string model_out;
};

int run_fit(const FitArgs& a)
{
    const auto data = analytics::Dataset::from_csv(read_file(a.csv));
    const auto parts = regression::split(data, {parse_indices(a.test_indices)});
    const auto model = regression::fit_ols(parts.train, split_list(a.predictors), a.target);

    std::printf("intercept  %.15g\n", model.intercept);
    for (const auto& [name, value] : model.coefficients)
        std::printf("%-10s %.15g\n", name.c_str(), value);
    if (!parts.test.empty()) {
        std::vector<double> actual, predicted;
        for (const auto& r : parts.test.records()) {
            actual.push_back(analytics::Dataset({r}).value(0, *analytics::column_index(a.target)));
            predicted.push_back(regression::predict(model, r));
        }
        const auto ev = regression::evaluate(actual, predicted);
        std::printf("test rows  %zu\nmae        %.15g\nmse        %.15g\naccuracy   %s\n", actual.size(), ev.mae,
                    ev.mse, analytics::format_number(ev.accuracy_pct).c_str());
    }
    if (!a.model_out.empty())
        regression::save_model(model, a.model_out);
    return 0;
}

int run_predict(const std::string& model_path, const std::string& csv, const std::string& indices,
                const std::string& out)
{
    const auto model = regression::load_model(model_path);
    const auto data = analytics::Dataset::from_csv(read_file(csv));
    std::vector<std::size_t> rows;
    if (indices.empty())
        for (std::size_t i = 0; i < data.size(); ++i)
            rows.push_back(i);
    else
        rows = parse_indices(indices);
    regression::SplitSpec{rows}.validate(data.size());

    const auto target = *analytics::column_index(model.target);
    std::string text = "index,record_no,actual,predicted,error\n";
    for (std::size_t i : rows) {
        const auto& r = data.records()[i];
        const double actual = data.value(i, target);
        const double predicted = regression::predict(model, r);
        text += std::to_string(i) + "," + std::to_string(r.record_no) + "," + analytics::format_number(actual) + "," +
                analytics::format_number(predicted) + "," + analytics::format_number(actual - predicted) + "\n";
    }
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ECG telemetry: device simulator, MQTT broker, record store, analysis"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the MQTT broker, record store and HTTP gateway");
    serve_cmd->add_option("--config", serve.config_path, "key=value config file");
    serve_cmd->add_option("--http", serve.http, "HTTP listen address host:port");
    serve_cmd->add_option("--mqtt", serve.mqtt, "MQTT listen address host:port");
    serve_cmd->add_option("--store-root", serve.store_root, "store directory");
    serve_cmd->add_option("--model", serve.model, "regression model file for /prediction");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate-device", "Run synthetic heartbeat and ECG sessions against a broker");
    sim_cmd->add_option("--mqtt", sim.mqtt, "broker host:port");
    sim_cmd->add_option("--patient", sim.patient);
    sim_cmd->add_option("--age", sim.age);
    sim_cmd->add_option("--heart-rate", sim.heart_rate, "BPM (default 60)");
    sim_cmd->add_option("--noise", sim.noise_mv, "electrode noise std (mV)");
    sim_cmd->add_option("--timeout", sim.timeout, "ECG capture limit (s)");
    sim_cmd->add_option("--sessions", sim.sessions);
    sim_cmd->add_option("--seed", sim.seed);
    sim_cmd->add_option("--lead-off", sim.lead_off, "start:end seconds, repeatable");
    sim_cmd->add_option("--username", sim.username);
    sim_cmd->add_option("--password", sim.password);
    sim_cmd->add_option("--mode", sim.mode, "what each session measures")
        ->check(CLI::IsMember({"heartbeat", "ecg", "both"}))
        ->capture_default_str();
    sim_cmd->add_option("--synth-config", sim.synth_config, "key=value synthesis settings")->check(CLI::ExistingFile);

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest-csv", "Publish dataset rows as device PQRST records");
    ingest_cmd->add_option("--csv", ingest.csv)->required();
    auto* via_mqtt = ingest_cmd->add_option("--mqtt", ingest.mqtt, "publish through this broker");
    auto* via_store = ingest_cmd->add_option("--store-root", ingest.store_root, "write to this store directly");
    via_mqtt->excludes(via_store);
    ingest_cmd->add_option("--patient", ingest.patient);
    ingest_cmd->add_option("--username", ingest.username);
    ingest_cmd->add_option("--password", ingest.password);

    std::string export_root, export_patient, export_out;
    auto* export_cmd = app.add_subcommand("export-csv", "Write stored PQRST records as CSV");
    export_cmd->add_option("--store-root", export_root);
    export_cmd->add_option("--patient", export_patient);
    export_cmd->add_option("-o,--out", export_out);

    AnalyzeArgs analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "Descriptive statistics, correlation and quality bands");
    analyze_cmd->add_option("--csv", analyze.csv)->required();
    analyze_cmd->add_flag("--drop-outliers", analyze.drop_outliers);
    analyze_cmd->add_option("--report", analyze.reports, "stats|corr|cov|rank|quality, repeatable");
    analyze_cmd->add_option("--round", analyze.round, "decimals to display");
    analyze_cmd->add_flag("--json", analyze.json);
    analyze_cmd->add_option("--out-dir", analyze.out_dir, "also write <report>.csv files here");
    analyze_cmd->add_option("--excellent", analyze.excellent);
    analyze_cmd->add_option("--acceptable", analyze.acceptable);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Least-squares fit on the rows outside the test set");
    fit_cmd->add_option("--csv", fit.csv)->required();
    fit_cmd->add_option("--target", fit.target);
    fit_cmd->add_option("--predictors", fit.predictors);
    fit_cmd->add_option("--test-indices", fit.test_indices, "0-based, comma separated");
    fit_cmd->add_option("--model-out", fit.model_out);

    std::string predict_model, predict_csv, predict_indices, predict_out;
    auto* predict_cmd = app.add_subcommand("predict", "Apply a model file to dataset rows");
    predict_cmd->add_option("--model", predict_model)->required();
    predict_cmd->add_option("--csv", predict_csv)->required();
    predict_cmd->add_option("--indices", predict_indices, "0-based rows; default all");
    predict_cmd->add_option("-o,--out", predict_out);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    if (app.count("--log-level") > 0)
        serve.log_level = log_level;

    try {
        if (*serve_cmd)
            return run_serve(serve);
        if (*sim_cmd)
            return run_simulate(sim);
        if (*ingest_cmd)
            return run_ingest(ingest);
        if (*export_cmd)
            return run_export(export_root, export_patient, export_out);
        if (*analyze_cmd)
            return run_analyze(analyze);
        if (*fit_cmd)
            return run_fit(fit);
        if (*predict_cmd)
            return run_predict(predict_model, predict_csv, predict_indices, predict_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
