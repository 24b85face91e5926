#include "ecgiot/gateway.hpp"

#include <cmath>
#include <limits>
#include <regex>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace ecgiot {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

void problem(httplib::Response& res, int status, const std::string& code, const std::string& detail)
{
    res.status = status;
    res.set_content(json{{"status", status}, {"code", code}, {"detail", detail}}.dump(), "application/problem+json");
}

void ok(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), kJson);
}

// Returns false (and fills res) when the id is malformed.
bool check_patient(const std::string& id, httplib::Response& res)
{
    if (is_valid_patient_id(id))
        return true;
    problem(res, 400, "invalid_patient_id", "patient id must be 1-64 characters from [A-Za-z0-9_.-]");
    return false;
}

}  // namespace

struct Gateway::Impl {
    GatewayOptions options;
    store::RecordStore& store;
    Ingestor ingestor;
    httplib::Server server;

    Impl(GatewayOptions o, store::RecordStore& s) : options(std::move(o)), store(s), ingestor(s) { routes(); }

    void routes()
    {
        server.Get(R"(/patients/(.+)/heartbeat/latest)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!check_patient(id, res))
                return;
            const auto doc = store.latest(id, TopicClass::Heartbeat);
            if (!doc)
                return problem(res, 404, "not_found", "no heartbeat readings for patient '" + id + "'");
            ok(res, 200, doc->payload);
        });

        server.Get(R"(/patients/(.+)/ecg)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!check_patient(id, res))
                return;
            TimestampMs from = std::numeric_limits<TimestampMs>::min();
            TimestampMs to = std::numeric_limits<TimestampMs>::max();
            for (auto [name, target] : {std::pair{"from", &from}, std::pair{"to", &to}}) {
                if (!req.has_param(name))
                    continue;
                const auto t = parse_rfc3339(req.get_param_value(name));
                if (!t)
                    return problem(res, 400, "invalid_timestamp",
                                   std::string("'") + name + "' is not an RFC 3339 timestamp");
                *target = *t;
            }
            if (from > to)
                return problem(res, 400, "invalid_range", "'from' is after 'to'");
            json out = json::array();
            for (auto& d : store.read_range(id, TopicClass::Pqrst, from, to))
                out.push_back(std::move(d.payload));
            ok(res, 200, out);
        });

        server.Get(R"(/patients/(.+)/prediction)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!check_patient(id, res))
                return;
            if (!options.model)
                return problem(res, 503, "no_model", "no regression model is configured");
            const auto doc = store.latest(id, TopicClass::Pqrst);
            if (!doc)
                return problem(res, 404, "not_found", "no ECG records for patient '" + id + "'");
            const auto rec = pqrst_from_json(doc->payload);
            const double predicted = regression::predict(*options.model, rec);
            ok(res, 200,
               {{"patient_id", id},
                {"record_no", rec.record_no},
                {"actual_r", rec.r},
                {"predicted_r", predicted},
                {"abs_error", std::abs(rec.r - predicted)}});
        });

        server.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
            const auto records = store.pqrst_records();
            if (records.empty())
                return problem(res, 404, "no_records", "the store holds no ECG records yet");
            ok(res, 200, analytics::to_json(analytics::analyze(analytics::Dataset(records), options.quality)));
        });

        server.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
            if (req.body.empty())
                return problem(res, 400, "empty_body", "request body is empty");
            const auto r = ingestor.ingest_kind(req.body);
            ok(res, r.duplicate ? 200 : 201,
               {{"sequence", r.sequence},
                {"duplicate", r.duplicate},
                {"topic", make_topic(r.patient_id, r.topic_class)}});
        });

        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const ValidationError& e) {
                const bool range = e.kind() == ValidationError::Kind::Range;
                problem(res, range ? 422 : 400, range ? "out_of_range" : "schema_violation", e.what());
            } catch (const store::StoreError& e) {
                spdlog::error("gateway: store failure: {}", e.what());
                problem(res, 500, "store_failure", e.what());
            } catch (const std::exception& e) {
                spdlog::error("gateway: {}", e.what());
                problem(res, 500, "internal_error", e.what());
            }
        });

        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty())
                return;
            static const std::regex known(R"(/patients/[^/]+/(heartbeat/latest|ecg|prediction)|/stats|/ingest)");
            if (res.status == 404 && std::regex_match(req.path, known))
                res.status = 405;
            if (res.status == 404)
                problem(res, 404, "not_found", "no route for " + req.method + " " + req.path);
            else if (res.status == 405)
                problem(res, 405, "method_not_allowed", req.method + " is not allowed on " + req.path);
            else
                problem(res, res.status, "error", httplib::status_message(res.status));
        });
    }
};

Gateway::Gateway(GatewayOptions options, store::RecordStore& store)
    : impl_(std::make_unique<Impl>(std::move(options), store))
{
}

Gateway::~Gateway()
{
    stop();
}

void Gateway::start()
{
    const auto& ep = impl_->options.listen;
    if (ep.port == 0) {
        const int p = impl_->server.bind_to_any_port(ep.host);
        if (p <= 0)
            throw net::NetError("cannot bind HTTP listener on " + ep.host);
        port_ = static_cast<std::uint16_t>(p);
    } else {
        if (!impl_->server.bind_to_port(ep.host, ep.port))
            throw net::NetError("cannot bind HTTP listener on " + ep.to_string());
        port_ = ep.port;
    }
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    spdlog::info("gateway listening on {}:{}", ep.host, port_);
}

void Gateway::stop()
{
    if (thread_.joinable()) {
        impl_->server.stop();
        thread_.join();
    }
}

}  // namespace ecgiot
