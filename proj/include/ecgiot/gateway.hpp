#pragma once

// Read-only HTTP API over the record store, plus POST /ingest.
//
//   GET  /patients/{id}/heartbeat/latest
//   GET  /patients/{id}/ecg?from=<rfc3339>&to=<rfc3339>
//   GET  /patients/{id}/prediction
//   GET  /stats
//   POST /ingest
//
// Errors carry {status, code, detail} as application/problem+json.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "ecgiot/analytics.hpp"
#include "ecgiot/ingest.hpp"
#include "ecgiot/net/socket.hpp"
#include "ecgiot/record_store.hpp"
#include "ecgiot/regression.hpp"

namespace ecgiot {

struct GatewayOptions {
    net::Endpoint listen{"127.0.0.1", 8080};  // port 0 picks a free port
    analytics::QualityThresholds quality{};
    std::optional<regression::LinearModel> model;
};

class Gateway {
public:
    Gateway(GatewayOptions options, store::RecordStore& store);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    // Binds and serves on a background thread. Throws net::NetError.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::uint16_t port_ = 0;
    std::thread thread_;
};

}  // namespace ecgiot
